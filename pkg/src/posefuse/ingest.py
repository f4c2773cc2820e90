"""Estimator output parsing and person association."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import FormatMismatch, ParseError
from .skeleton import (
    MISSING,
    NUM_JOINTS,
    AggregatedPose,
    FrameBundle,
    JointId,
    Keypoint,
    PoseProposal,
    frame_from_json,
)

DROP = None

# OpenPose COCO-18 body: nose, neck, r_sho, r_elb, r_wri, l_sho, l_elb, l_wri,
# r_hip, r_knee, r_ank, l_hip, l_knee, l_ank, r_eye, l_eye, r_ear, l_ear
OPENPOSE18_MAP: tuple[JointId | None, ...] = (
    JointId.HEAD, DROP,
    JointId.R_SHOULDER, JointId.R_ELBOW, JointId.R_WRIST,
    JointId.L_SHOULDER, JointId.L_ELBOW, JointId.L_WRIST,
    JointId.R_HIP, JointId.R_KNEE, JointId.R_ANKLE,
    JointId.L_HIP, JointId.L_KNEE, JointId.L_ANKLE,
    DROP, DROP, DROP, DROP,
)  # fmt: skip

# COCO-17: nose, l_eye, r_eye, l_ear, r_ear, l_sho, r_sho, l_elb, r_elb,
# l_wri, r_wri, l_hip, r_hip, l_knee, r_knee, l_ank, r_ank
COCO17_MAP: tuple[JointId | None, ...] = (
    JointId.HEAD, DROP, DROP, DROP, DROP,
    JointId.L_SHOULDER, JointId.R_SHOULDER,
    JointId.L_ELBOW, JointId.R_ELBOW,
    JointId.L_WRIST, JointId.R_WRIST,
    JointId.L_HIP, JointId.R_HIP,
    JointId.L_KNEE, JointId.R_KNEE,
    JointId.L_ANKLE, JointId.R_ANKLE,
)  # fmt: skip

CANONICAL_MAP: tuple[JointId | None, ...] = tuple(JointId)


@dataclass(frozen=True)
class EstimatorFormat:
    kind: str
    joint_map: tuple[JointId | None, ...]

    def __post_init__(self):
        if self.kind not in ("openpose18_json", "coco17_json", "canonical_json"):
            raise ValueError(f"unknown format kind {self.kind!r}")
        produced = [j for j in self.joint_map if j is not None]
        if len(produced) != len(set(produced)):
            raise ValueError("joint_map targets a canonical joint twice")


FORMATS = {
    "openpose18_json": EstimatorFormat("openpose18_json", OPENPOSE18_MAP),
    "coco17_json": EstimatorFormat("coco17_json", COCO17_MAP),
    "canonical_json": EstimatorFormat("canonical_json", CANONICAL_MAP),
}


def get_format(kind: str | EstimatorFormat) -> EstimatorFormat:
    if isinstance(kind, EstimatorFormat):
        return kind
    try:
        return FORMATS[kind]
    except KeyError:
        raise ValueError(f"unknown format {kind!r}; choose from {sorted(FORMATS)}") from None


def map_joints(source: Sequence[Keypoint], joint_map: Sequence[JointId | None]) -> tuple[Keypoint, ...]:
    """Reorder source joints into the canonical layout. Unmapped targets are invalid."""
    if len(source) != len(joint_map):
        raise FormatMismatch(f"expected {len(joint_map)} joints, got {len(source)}")
    out = [MISSING] * NUM_JOINTS
    for kp, target in zip(source, joint_map):
        if target is not None:
            out[target] = kp
    return tuple(out)


def _triplets(flat, n_joints: int, where: str) -> list[Keypoint]:
    if not isinstance(flat, list) or len(flat) != 3 * n_joints:
        got = len(flat) if isinstance(flat, list) else type(flat).__name__
        raise FormatMismatch(f"{where}: expected {3 * n_joints} values, got {got}")
    out = []
    for i in range(n_joints):
        x, y, s = (float(v) for v in flat[3 * i : 3 * i + 3])
        # COCO visibility flags (2) and uncalibrated scores are clamped into [0, 1].
        s = min(max(s, 0.0), 1.0)
        if s <= 0.0 or not (math.isfinite(x) and math.isfinite(y)):
            out.append(MISSING)
        else:
            out.append(Keypoint(x, y, s, True))
    return out


def _frame_index(raw, position: int) -> int:
    for key in ("frame", "t", "image_id"):
        if key in raw:
            value = raw[key]
            if isinstance(value, str):
                digits = re.findall(r"\d+", value)
                if not digits:
                    raise ParseError(f"cannot read a frame index from {value!r}")
                return int(digits[-1])
            return int(value)
    return position


def _load_json(data: bytes | str):
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from exc


@dataclass(frozen=True)
class ParsedOutput:
    bundles: list[FrameBundle]
    video: str = ""
    resolution: tuple[int, int] | None = None


def parse_document(
    data: bytes | str, fmt: str | EstimatorFormat, estimator: int = 1
) -> ParsedOutput:
    """Parse one per-video estimator file into frame bundles plus its metadata.

    Accepted containers: a list of per-frame objects, or an object with
    optional ``video``/``resolution`` and a ``frames`` list. Per-frame objects
    follow the native layout (``people`` with ``pose_keypoints_2d`` for
    OpenPose, ``keypoints`` for COCO). A flat COCO results list (one entry per
    detection with ``image_id``) is also read. Canonical files use the
    ``persons``/``frames`` schema, each person entry becoming one detection.
    """
    fmt = get_format(fmt)
    doc = _load_json(data)
    video, resolution = "", None
    if isinstance(doc, dict) and "resolution" in doc and doc["resolution"]:
        w, h = doc["resolution"]
        resolution = (int(w), int(h))
    if isinstance(doc, dict):
        video = str(doc.get("video", ""))

    if fmt.kind == "canonical_json":
        bundles = _parse_canonical(doc, fmt, estimator)
    else:
        bundles = _parse_native(doc, fmt, estimator)
    return ParsedOutput(bundles, video, resolution)


def parse_estimator_output(
    data: bytes | str, fmt: str | EstimatorFormat, estimator: int = 1
) -> list[FrameBundle]:
    return parse_document(data, fmt, estimator).bundles


def _collect(per_frame: dict[int, list[tuple[Keypoint, ...]]], estimator: int) -> list[FrameBundle]:
    bundles = []
    for t in sorted(per_frame):
        props = tuple(
            PoseProposal(estimator, t, det, joints) for det, joints in enumerate(per_frame[t])
        )
        bundles.append(FrameBundle(t, props))
    return bundles


def _parse_native(doc, fmt: EstimatorFormat, estimator: int) -> list[FrameBundle]:
    key = "pose_keypoints_2d" if fmt.kind == "openpose18_json" else "keypoints"
    n_src = len(fmt.joint_map)
    per_frame: dict[int, list[tuple[Keypoint, ...]]] = {}

    if isinstance(doc, dict):
        if "frames" in doc:
            frames = doc["frames"]
        elif "people" in doc:
            frames = [doc]
        else:
            raise ParseError("expected a 'frames' list or a single frame with 'people'")
    elif isinstance(doc, list):
        frames = doc
    else:
        raise ParseError("top-level JSON must be an object or a list")

    if frames and all(isinstance(f, dict) and key in f and "people" not in f for f in frames):
        # flat COCO results list: one detection per entry
        for pos, det in enumerate(frames):
            t = _frame_index(det, pos)
            joints = map_joints(_triplets(det[key], n_src, f"detection {pos}"), fmt.joint_map)
            per_frame.setdefault(t, []).append(joints)
        return _collect(per_frame, estimator)

    for pos, frame in enumerate(frames):
        if not isinstance(frame, dict) or "people" not in frame:
            raise ParseError(f"frame {pos} has no 'people' array")
        t = _frame_index(frame, pos)
        if t in per_frame:
            raise ParseError(f"frame index {t} appears twice")
        per_frame[t] = [
            map_joints(_triplets(person.get(key), n_src, f"frame {t}"), fmt.joint_map)
            for person in frame["people"]
        ]
    return _collect(per_frame, estimator)


def _parse_canonical(doc, fmt: EstimatorFormat, estimator: int) -> list[FrameBundle]:
    if not isinstance(doc, dict) or "persons" not in doc:
        raise ParseError("canonical document needs a 'persons' list")
    per_frame: dict[int, list[tuple[Keypoint, ...]]] = {}
    for person in doc["persons"]:
        for raw in person["frames"]:
            if len(raw.get("joints", ())) != len(fmt.joint_map):
                raise FormatMismatch(
                    f"expected {len(fmt.joint_map)} joints, got {len(raw.get('joints', ()))}"
                )
            pose = frame_from_json(raw)
            joints = map_joints(
                [kp if kp.score is None or kp.score > 0 else MISSING for kp in pose.joints],
                fmt.joint_map,
            )
            # score-absent joints default to full confidence
            joints = tuple(
                Keypoint(kp.x, kp.y, 1.0, True) if kp.valid and kp.score is None else kp
                for kp in joints
            )
            per_frame.setdefault(pose.frame, []).append(joints)
    return _collect(per_frame, estimator)


def merge_bundles(streams: Sequence[Sequence[FrameBundle]]) -> list[FrameBundle]:
    """Merge per-estimator bundle lists into one bundle per frame."""
    per_frame: dict[int, list[PoseProposal]] = {}
    for stream in streams:
        for b in stream:
            per_frame.setdefault(b.frame, []).extend(b.proposals)
    return [FrameBundle(t, tuple(per_frame[t])) for t in sorted(per_frame)]


# -- association ------------------------------------------------------------


def default_match_threshold(resolution: tuple[int, int]) -> float:
    w, h = resolution
    return 0.5 * math.hypot(w, h) / 10.0


def mean_joint_distance(a: Sequence[Keypoint], b: Sequence[Keypoint]) -> float:
    """Mean distance over joints valid in both poses; inf when none overlap."""
    total, n = 0.0, 0
    for p, q in zip(a, b):
        if p.valid and q.valid:
            total += math.hypot(p.x - q.x, p.y - q.y)
            n += 1
    return total / n if n else math.inf


def associate_persons(
    bundle: FrameBundle,
    prev: Mapping[int, AggregatedPose],
    tau_match: float,
    next_id: int | None = None,
    estimators: Sequence[int] | None = None,
) -> list[tuple[int, dict[int, PoseProposal | None]]]:
    """Assign each proposal in ``bundle`` to at most one person.

    Tracked persons (``prev`` maps person id to their latest fused pose) take,
    per estimator, the closest proposal within ``tau_match``; candidate pairs
    are committed greedily in order of (distance, estimator, detection,
    person). Leftover proposals are grouped around a seed taken from the
    lowest estimator index, each other estimator contributing its closest
    leftover within ``tau_match``. Returns ``(person_id, {estimator: proposal
    or None})`` for every person that received at least one proposal.
    """
    slots_for = sorted(estimators) if estimators is not None else None
    estimators = sorted({p.estimator for p in bundle.proposals})
    # canonical detection order so the result does not depend on input ordering
    by_est: dict[int, list[PoseProposal]] = {
        k: sorted(
            (p for p in bundle.proposals if p.estimator == k), key=lambda p: p.person
        )
        for k in estimators
    }
    if next_id is None:
        next_id = max(prev, default=-1) + 1

    assigned: dict[int, dict[int, PoseProposal]] = {}
    taken: set[tuple[int, int]] = set()

    pairs = []
    for pid, pose in prev.items():
        for k in estimators:
            for det, prop in enumerate(by_est[k]):
                d = mean_joint_distance(prop.joints, pose.joints)
                if d <= tau_match:
                    pairs.append((d, k, det, pid))
    pairs.sort()
    for d, k, det, pid in pairs:
        slot = assigned.setdefault(pid, {})
        if k in slot or (k, det) in taken:
            continue
        slot[k] = by_est[k][det]
        taken.add((k, det))

    leftovers = [
        (k, det) for k in estimators for det in range(len(by_est[k])) if (k, det) not in taken
    ]
    while leftovers:
        seed_k, seed_det = leftovers.pop(0)
        seed = by_est[seed_k][seed_det]
        group = {seed_k: seed}
        for k in estimators:
            if k == seed_k:
                continue
            best = None
            for k2, det in leftovers:
                if k2 != k:
                    continue
                d = mean_joint_distance(by_est[k][det].joints, seed.joints)
                if d <= tau_match and (best is None or d < best[0]):
                    best = (d, det)
            if best is not None:
                group[k] = by_est[k][best[1]]
                leftovers.remove((k, best[1]))
        assigned[next_id] = group
        next_id += 1

    all_est = slots_for if slots_for is not None else estimators
    return [
        (pid, {k: slot.get(k) for k in all_est})
        for pid, slot in sorted(assigned.items())
        if slot
    ]
