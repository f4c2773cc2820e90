"""PCKh, head-length-normalized MPJPE and the confidence-vs-error histogram."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyEval, HeadLengthUndefined
from .skeleton import JOINT_NAMES, NUM_JOINTS, AggregatedPose, PoseSequence, head_length

DEFAULT_BIN_EDGES = tuple(np.round(np.arange(0.0, 5.01, 0.5), 10))


@dataclass(frozen=True)
class EvalConfig:
    alpha: float = 0.5
    bins: tuple[float, ...] = DEFAULT_BIN_EDGES
    gamma: float = 0.18

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if len(self.bins) < 2 or any(b <= a for a, b in zip(self.bins, self.bins[1:])):
            raise ValueError("bin edges must be strictly increasing (at least two)")


@dataclass
class JointErrors:
    """Per (frame, joint) pairs with a valid GT joint.

    ``err`` holds the GT-head-length-normalized error, NaN when the prediction
    is missing. ``joint`` holds the joint index of each pair.
    """

    err: np.ndarray
    joint: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.err)

    def __add__(self, other: "JointErrors") -> "JointErrors":
        return JointErrors(
            np.concatenate([self.err, other.err]), np.concatenate([self.joint, other.joint])
        )


def _pred_frames(pred: PoseSequence | None) -> dict[int, AggregatedPose]:
    if pred is None:
        return {}
    return {f.frame: f for f in pred.frames if f.retained}


def gt_head_length(gt_pose: AggregatedPose) -> float | None:
    try:
        hl = head_length(gt_pose.joints)
    except HeadLengthUndefined:
        return None
    return hl if hl > 0 else None


def joint_errors(pred: PoseSequence | None, gt: PoseSequence) -> JointErrors:
    """Collect normalized errors for every valid GT joint.

    Predicted frames flagged as not retained count as missing. GT frames whose
    head length is undefined or zero are skipped.
    """
    preds = _pred_frames(pred)
    errs, joints = [], []
    for g in gt.frames:
        hl = gt_head_length(g)
        if hl is None:
            continue
        p = preds.get(g.frame)
        for v, gk in enumerate(g.joints):
            if not gk.valid:
                continue
            pk = None if p is None else p.joints[v]
            if pk is None or not pk.valid:
                errs.append(math.nan)
            else:
                errs.append(math.hypot(pk.x - gk.x, pk.y - gk.y) / hl)
            joints.append(v)
    return JointErrors(np.array(errs, dtype=np.float64), np.array(joints, dtype=np.int64))


def _require(e: JointErrors) -> None:
    if len(e.err) == 0:
        raise EmptyEval("no evaluable (frame, joint) pairs")


def pckh_from_errors(e: JointErrors, alpha: float) -> float:
    _require(e)
    hit = np.where(e.missing, False, e.err <= alpha)
    return float(hit.mean())


def mpjpe_from_errors(e: JointErrors) -> float:
    _require(e)
    ok = e.err[~e.missing]
    return float(ok.mean()) if len(ok) else math.nan


def miss_rate(e: JointErrors) -> float:
    _require(e)
    return float(e.missing.mean())


def per_joint_pckh(e: JointErrors, alpha: float, n_joints: int = NUM_JOINTS) -> list[float]:
    out = []
    for v in range(n_joints):
        sel = e.joint == v
        if not sel.any():
            out.append(math.nan)
            continue
        sub = e.err[sel]
        out.append(float(np.where(np.isnan(sub), False, sub <= alpha).mean()))
    return out


def pckh(pred: PoseSequence | None, gt: PoseSequence, alpha: float = 0.5) -> float:
    """Fraction of valid GT joints predicted within ``alpha`` GT head lengths.

    A missing prediction counts as a miss.
    """
    return pckh_from_errors(joint_errors(pred, gt), alpha)


def mpjpe_normalized(pred: PoseSequence | None, gt: PoseSequence) -> float:
    """Mean error in GT head lengths over predicted joints; misses are excluded
    (see ``miss_rate``). NaN when every prediction is missing."""
    return mpjpe_from_errors(joint_errors(pred, gt))


def pose_error(pred: AggregatedPose, gt: AggregatedPose) -> float | None:
    """Mean normalized error of one pose over joints valid in both, or None."""
    hl = gt_head_length(gt)
    if hl is None:
        return None
    d = [
        math.hypot(p.x - g.x, p.y - g.y) / hl
        for p, g in zip(pred.joints, gt.joints)
        if p.valid and g.valid
    ]
    return sum(d) / len(d) if d else None


@dataclass
class ConfidenceHistogram:
    edges: tuple[float, ...]
    gamma: float
    retained: list[int]
    discarded: list[int]

    @property
    def total(self) -> int:
        return sum(self.retained) + sum(self.discarded)

    def labels(self) -> list[str]:
        e = self.edges
        return [f"[{e[i]:g},{e[i + 1]:g})" for i in range(len(e) - 1)] + [f">={e[-1]:g}"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "lo", "hi", "retained", "discarded"])
        lo = list(self.edges)
        hi = list(self.edges[1:]) + [math.inf]
        for lab, a, b, r, d in zip(self.labels(), lo, hi, self.retained, self.discarded):
            w.writerow([lab, a, b, r, d])
        return buf.getvalue()


def bin_index(value: float, edges: Sequence[float]) -> int:
    """Bins are [e_i, e_{i+1}); values below the first edge fall into bin 0 and
    values at or above the last edge into the overflow bin ``len(edges) - 1``."""
    i = int(np.searchsorted(edges, value, side="right")) - 1
    return min(max(i, 0), len(edges) - 1)


def histogram_from_pairs(
    pairs: Iterable[tuple[float, float]], cfg: EvalConfig
) -> ConfidenceHistogram:
    """Tally (confidence, error) pairs into bins split by ``confidence >= gamma``."""
    n = len(cfg.bins)
    kept, dropped = [0] * n, [0] * n
    count = 0
    for c, err in pairs:
        i = bin_index(err, cfg.bins)
        if c >= cfg.gamma:
            kept[i] += 1
        else:
            dropped[i] += 1
        count += 1
    if count == 0:
        raise EmptyEval("no pose has both a confidence and a computable error")
    return ConfidenceHistogram(tuple(cfg.bins), cfg.gamma, kept, dropped)


def confidence_error_pairs(
    seqs: Iterable[PoseSequence], gts: Iterable[PoseSequence]
) -> list[tuple[float, float]]:
    """(confidence, pose error) for every fused pose, retained or not, that
    has a GT pose at the same frame. Sequences pair up positionally."""
    pairs = []
    for seq, gt in zip(seqs, gts):
        g_by_t = gt.by_frame()
        for f in seq.frames:
            g = g_by_t.get(f.frame)
            if g is None:
                continue
            err = pose_error(f, g)
            if err is not None:
                pairs.append((f.confidence, err))
    return pairs


def confidence_error_histogram(
    seqs: Iterable[PoseSequence], gts: Iterable[PoseSequence], cfg: EvalConfig | None = None
) -> ConfidenceHistogram:
    cfg = cfg or EvalConfig()
    return histogram_from_pairs(confidence_error_pairs(seqs, gts), cfg)


@dataclass
class EvalReport:
    pckh: float
    mpjpe: float
    miss_rate: float
    per_joint_pckh: list[float]
    alpha: float
    n_pairs: int
    extra_pckh: dict[str, float] = field(default_factory=dict)
    histogram: ConfidenceHistogram | None = None

    def to_dict(self) -> dict:
        out = {
            "alpha": self.alpha,
            "pckh": self.pckh,
            "mpjpe": None if math.isnan(self.mpjpe) else self.mpjpe,
            "miss_rate": self.miss_rate,
            "n_pairs": self.n_pairs,
            "per_joint_pckh": {
                name: (None if math.isnan(v) else v)
                for name, v in zip(JOINT_NAMES, self.per_joint_pckh)
            },
        }
        if self.extra_pckh:
            out["pckh_at"] = dict(self.extra_pckh)
        if self.histogram is not None:
            h = self.histogram
            out["histogram"] = {
                "edges": list(h.edges),
                "gamma": h.gamma,
                "retained": h.retained,
                "discarded": h.discarded,
            }
        return out


def evaluate(
    pairs: Iterable[tuple[PoseSequence | None, PoseSequence]],
    cfg: EvalConfig | None = None,
    extra_alphas: Sequence[float] = (),
) -> EvalReport:
    """Pool (prediction, GT) sequence pairs into one report."""
    cfg = cfg or EvalConfig()
    e = JointErrors(np.zeros(0), np.zeros(0, dtype=np.int64))
    for pred, gt in pairs:
        e = e + joint_errors(pred, gt)
    return EvalReport(
        pckh=pckh_from_errors(e, cfg.alpha),
        mpjpe=mpjpe_from_errors(e),
        miss_rate=miss_rate(e),
        per_joint_pckh=per_joint_pckh(e, cfg.alpha),
        alpha=cfg.alpha,
        n_pairs=len(e.err),
        extra_pckh={f"{a:g}": pckh_from_errors(e, a) for a in extra_alphas},
    )
