"""Pseudo ground-truth for weakly-supervised fine-tuning: boxes and anchor-pose classes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BoxUndefined, InsufficientData, InvalidDistribution, Unassignable
from .skeleton import NUM_JOINTS, Keypoint, PoseSequence

NORMALIZATION = "box_top_left_origin/unit_height"
MAX_ITER = 300


@dataclass(frozen=True)
class PseudoBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def contains(self, kp: Keypoint, tol: float = 0.0) -> bool:
        return (
            self.x_min - tol <= kp.x <= self.x_max + tol
            and self.y_min - tol <= kp.y <= self.y_max + tol
        )


def _expand_axis(lo: float, hi: float, expand: float) -> tuple[float, float]:
    if hi - lo == 0.0:
        lo, hi = lo - 0.5, hi + 0.5
    grow = (hi - lo) * expand / 2.0
    return lo - grow, hi + grow


def derive_box(
    pose: Sequence[Keypoint],
    expand: float = 0.10,
    image_size: tuple[float, float] | None = None,
) -> PseudoBox:
    """Tight box over the valid joints, grown by ``expand`` of its width and
    height (half on each side) and clipped to ``image_size`` when given.

    A zero extent on either axis is first padded to one pixel.
    """
    if expand < 0:
        raise ValueError("expand must be >= 0")
    pts = [kp for kp in pose if kp.valid]
    if len(pts) < 2:
        raise BoxUndefined(f"a box needs at least 2 valid joints, got {len(pts)}")
    xs = [kp.x for kp in pts]
    ys = [kp.y for kp in pts]
    x0, x1 = _expand_axis(min(xs), max(xs), expand)
    y0, y1 = _expand_axis(min(ys), max(ys), expand)
    if image_size is not None:
        w, h = image_size
        x0, x1 = min(max(x0, 0.0), w), min(max(x1, 0.0), w)
        y0, y1 = min(max(y0, 0.0), h), min(max(y1, 0.0), h)
    return PseudoBox(float(x0), float(y0), float(x1), float(y1))


def normalize_pose_for_similarity(pose: Sequence[Keypoint]) -> tuple[Keypoint, ...]:
    """Move the tight box's top-left corner to the origin and scale to unit box height."""
    box = derive_box(pose, expand=0.0)
    s = 1.0 / box.height
    return tuple(
        Keypoint((kp.x - box.x_min) * s, (kp.y - box.y_min) * s, kp.score, True)
        if kp.valid
        else kp
        for kp in pose
    )


def pose_vector(pose: Sequence[Keypoint]) -> np.ndarray:
    return np.array([c for kp in pose for c in (kp.x, kp.y)], dtype=np.float64)


@dataclass
class AnchorCodebook:
    anchors: np.ndarray  # (B, 13, 2)
    seed: int = 0
    normalization: str = NORMALIZATION
    iterations: int = 0
    objective_history: list[float] = field(default_factory=list)

    @property
    def B(self) -> int:
        return len(self.anchors)

    def to_json(self) -> str:
        doc = {
            "B": self.B,
            "seed": self.seed,
            "normalization": self.normalization,
            "iterations": self.iterations,
            "objective_history": self.objective_history,
            "anchors": self.anchors.tolist(),
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AnchorCodebook":
        doc = json.loads(text)
        anchors = np.asarray(doc["anchors"], dtype=np.float64)
        return cls(
            anchors,
            int(doc["seed"]),
            doc["normalization"],
            int(doc.get("iterations", 0)),
            list(doc.get("objective_history", [])),
        )


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point already sits on a center
            idx = int(rng.integers(n))
        centers.append(X[idx])
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(
    X: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_ITER
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ seeding.

    Stops at an assignment fixpoint or after ``max_iter`` updates. An empty
    cluster is re-seeded with the point farthest from its current center.
    Returns (centers, labels, objective per assignment step).
    """
    X = np.asarray(X, dtype=np.float64)
    if len(X) < k:
        raise InsufficientData(f"need at least {k} samples, got {len(X)}")
    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(X, k, rng)
    labels = prev_assign = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(X)), new_labels].sum()))
        if prev_assign is not None and np.array_equal(new_labels, prev_assign):
            labels = new_labels
            break
        prev_assign = new_labels.copy()
        labels = new_labels
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
        for c in range(k):
            if not (labels == c).any():
                own = ((X - centers[labels]) ** 2).sum(axis=1)
                far = int(own.argmax())
                labels[far] = c
                centers[c] = X[far]
                # the donor cluster loses a member
                for c2 in range(k):
                    members = labels == c2
                    if members.any():
                        centers[c2] = X[members].mean(axis=0)
    return centers, labels, history


def fit_anchor_codebook(
    poses: Iterable[Sequence[Keypoint]], B: int = 20, seed: int = 0
) -> AnchorCodebook:
    """Cluster normalized complete poses into ``B`` anchor poses.

    Poses with any invalid joint are skipped. Input poses are expected to be
    normalized already (see ``normalize_pose_for_similarity``).
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    complete = [p for p in poses if len(p) == NUM_JOINTS and all(kp.valid for kp in p)]
    if len(complete) < B:
        raise InsufficientData(f"{len(complete)} complete poses for {B} anchors")
    X = np.stack([pose_vector(p) for p in complete])
    centers, _, history = kmeans(X, B, seed)
    return AnchorCodebook(
        centers.reshape(B, NUM_JOINTS, 2), seed, NORMALIZATION, len(history), history
    )


def dissimilarity(normalized: Sequence[Keypoint], anchor: np.ndarray) -> float:
    """Mean per-joint distance over the pose's valid joints."""
    total, n = 0.0, 0
    for kp, (ax, ay) in zip(normalized, anchor):
        if kp.valid:
            total += math.hypot(kp.x - ax, kp.y - ay)
            n += 1
    return total / n if n else math.inf


def assign_anchor_class(
    pose: Sequence[Keypoint], codebook: AnchorCodebook
) -> tuple[int, float]:
    try:
        norm = normalize_pose_for_similarity(pose)
    except BoxUndefined as exc:
        raise Unassignable(str(exc)) from exc
    best, best_s = 0, math.inf
    for b, anchor in enumerate(codebook.anchors):
        s = dissimilarity(norm, anchor)
        if s < best_s:
            best, best_s = b, s
    return best, best_s


def classification_loss(u: Sequence[float], label: int) -> float:
    """Cross-entropy of one labelled sample: ``-ln u[label]``."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or len(u) == 0:
        raise InvalidDistribution("u must be a non-empty 1-d distribution")
    if not 0 <= label < len(u):
        raise InvalidDistribution(f"label {label} outside [0, {len(u) - 1}]")
    if np.any(~np.isfinite(u)) or np.any(u < 0) or abs(u.sum() - 1.0) > 1e-6:
        raise InvalidDistribution("u must be non-negative and sum to 1")
    p = float(u[label])
    if p == 0.0:
        return math.inf
    return -math.log(p)


@dataclass(frozen=True)
class PseudoAnnotation:
    video: str
    person: int
    frame: int
    box: PseudoBox
    anchor_class: int
    source_confidence: float

    def to_record(self) -> dict:
        return {
            "video": self.video,
            "person": self.person,
            "t": self.frame,
            "box": self.box.as_list(),
            "class": self.anchor_class,
            "conf": self.source_confidence,
        }


def annotate(
    sequences: Iterable[PoseSequence],
    codebook: AnchorCodebook,
    expand: float = 0.10,
) -> list[PseudoAnnotation]:
    """One annotation per retained pose, ordered by (video, person, t).

    Poses whose box or class cannot be derived are skipped.
    """
    out = []
    for seq in sorted(sequences, key=lambda s: (s.video, s.person)):
        for pose in seq.frames:
            if not pose.retained:
                continue
            try:
                box = derive_box(pose.joints, expand, seq.resolution)
                cls, _ = assign_anchor_class(pose.joints, codebook)
            except (BoxUndefined, Unassignable):
                continue
            out.append(PseudoAnnotation(seq.video, seq.person, pose.frame, box, cls, pose.confidence))
    return out


def export_training_targets(
    sequences: Iterable[PoseSequence],
    codebook: AnchorCodebook,
    expand: float = 0.10,
    gamma: float | None = None,
) -> str:
    """JSON-lines text: one header line, then one record per retained pose."""
    header = {
        "header": {
            "format": "posefuse-pseudo-gt/1",
            "gamma": gamma,
            "B": codebook.B,
            "seed": codebook.seed,
            "expand": expand,
            "normalization": codebook.normalization,
            "loss": {
                "total": "L = L_loc + L_classif",
                "L_loc": "EXTERNAL (region proposal network loss, computed by the trainer)",
                "L_classif": "cross_entropy(-ln u[class])",
            },
        }
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines += [
        json.dumps(a.to_record(), separators=(",", ":")) for a in annotate(sequences, codebook, expand)
    ]
    return "\n".join(lines) + "\n"
