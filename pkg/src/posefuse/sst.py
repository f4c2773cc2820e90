"""Selective spatio-temporal aggregation of multi-estimator pose proposals.

Pass 1 fuses each joint independently: on the first frame of a sequence the
joint is taken from the closest pair of estimators, afterwards from the
estimator closest to the previous fused joint. Pass 2 scores every fused pose
by its agreement with the proposals and drops poses scoring below ``gamma``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import DistanceUndefined, HeadLengthUndefined, InvalidParams, JointUnresolved
from .skeleton import (
    CARRIED_FORWARD,
    MISSING,
    NUM_JOINTS,
    AggregatedPose,
    FrameBundle,
    Keypoint,
    PoseSequence,
    head_length,
)

_TINY = sys.float_info.min


@dataclass(frozen=True)
class AggregationConfig:
    gamma: float = 0.18
    epsilon: float = 1e-12
    estimator_count_M: int = 3
    # Values below 13 select the leading canonical joints (test mode only).
    joint_count_N: int = NUM_JOINTS

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParams(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.epsilon > 0.0:
            raise InvalidParams(f"epsilon must be > 0, got {self.epsilon}")
        if self.estimator_count_M < 2:
            raise InvalidParams("at least two estimators are required")
        if not 1 <= self.joint_count_N <= NUM_JOINTS:
            raise InvalidParams(f"joint_count_N must be in [1, {NUM_JOINTS}]")

    @property
    def estimator_ids(self) -> tuple[int, ...]:
        return tuple(range(1, self.estimator_count_M + 1))


@dataclass(frozen=True)
class JointChoice:
    joint: int
    chosen_estimator: int | None
    position: Keypoint
    distance_to_prev: float | None = None


def euclidean_distance(a: Keypoint, b: Keypoint) -> float:
    if not (a.valid and b.valid):
        raise DistanceUndefined("distance needs two valid keypoints")
    return math.hypot(a.x - b.x, a.y - b.y)


def _candidates(proposals, estimators):
    if estimators is None:
        estimators = range(1, len(proposals) + 1)
    elif len(estimators) != len(proposals):
        raise ValueError("one estimator id per proposal is required")
    cands = [(k, kp) for k, kp in zip(estimators, proposals) if kp is not None and kp.valid]
    cands.sort(key=lambda c: c[0])
    return cands


def aggregate_joint_first_frame(
    proposals: Sequence[Keypoint | None],
    estimators: Sequence[int] | None = None,
    joint: int = 0,
) -> JointChoice:
    """Pick the lower-indexed member of the closest pair of proposals.

    Estimator ids default to ``1..M`` in proposal order; ties between pairs go
    to the lexicographically smallest ``(i, j)``.
    """
    cands = _candidates(proposals, estimators)
    if not cands:
        raise JointUnresolved(f"joint {joint} has no valid proposal")
    if len(cands) == 1:
        k, kp = cands[0]
        return JointChoice(joint, k, kp)
    best = None
    for i in range(len(cands)):
        for j in range(i + 1, len(cands)):
            d = euclidean_distance(cands[i][1], cands[j][1])
            if best is None or d < best[0]:
                best = (d, i)
    k, kp = cands[best[1]]
    return JointChoice(joint, k, kp)


def aggregate_joint(
    proposals: Sequence[Keypoint | None],
    prev: Keypoint,
    estimators: Sequence[int] | None = None,
    joint: int = 0,
) -> JointChoice:
    """Pick the proposal closest to the previous fused joint, or carry it forward."""
    cands = _candidates(proposals, estimators)
    if not cands:
        return JointChoice(joint, CARRIED_FORWARD, prev)
    best_k, best_kp, best_d = None, None, math.inf
    for k, kp in cands:
        d = euclidean_distance(kp, prev)
        if d < best_d:
            best_k, best_kp, best_d = k, kp, d
    return JointChoice(joint, best_k, best_kp, best_d)


def confidence(
    aggregated: Sequence[Keypoint],
    proposals: Sequence[Sequence[Keypoint] | None],
    cfg: AggregationConfig,
    sources: Sequence[int | None] | None = None,
) -> float:
    """Agreement score in (0, 1] between a fused pose and its proposals.

    Only (joint, estimator) pairs where the estimator has a valid keypoint and
    the fused joint was freshly selected contribute; the mean runs over those
    terms. Returns 0.0 when no term exists or the fused head length is undefined.
    """
    if len(aggregated) < 3:
        return 0.0
    try:
        normal = head_length(aggregated) + cfg.epsilon
    except HeadLengthUndefined:
        return 0.0
    total = 0.0
    terms = 0
    for v, fused in enumerate(aggregated):
        if not fused.valid:
            continue
        if sources is not None and sources[v] in (CARRIED_FORWARD, None):
            continue
        for prop in proposals:
            if prop is None:
                continue
            kp = prop[v]
            if kp.valid:
                total += math.hypot(fused.x - kp.x, fused.y - kp.y) / normal
                terms += 1
    if terms == 0:
        return 0.0
    c = math.exp(-total / terms)
    return c if c > 0.0 else _TINY


class SequenceAggregator:
    """Streaming pass 1 for one person: push frames in order, get fused poses.

    ``push`` returns None until some joint can be resolved; that frame becomes
    the sequence start. A joint that has never been resolved keeps using the
    first-frame rule until it is.
    """

    def __init__(self, cfg: AggregationConfig, estimators: Sequence[int] | None = None):
        self.cfg = cfg
        self.estimators = tuple(estimators) if estimators is not None else cfg.estimator_ids
        if len(self.estimators) != cfg.estimator_count_M:
            raise InvalidParams("estimator ids do not match estimator_count_M")
        self.prev: tuple[Keypoint, ...] | None = None
        self.last_frame: int | None = None

    def push(
        self, frame: int, proposals: Sequence[Sequence[Keypoint] | None]
    ) -> AggregatedPose | None:
        n = self.cfg.joint_count_N
        if len(proposals) != len(self.estimators):
            raise ValueError("one proposal slot per estimator is required")
        if self.last_frame is not None and frame <= self.last_frame:
            raise ValueError(f"frames must increase, got {frame} after {self.last_frame}")
        for p in proposals:
            if p is not None and len(p) < n:
                raise ValueError(f"proposal has {len(p)} joints, need {n}")

        joints: list[Keypoint] = []
        sources: list[int | None] = []
        for v in range(n):
            column = [None if p is None else p[v] for p in proposals]
            prev = None if self.prev is None else self.prev[v]
            if prev is not None and prev.valid:
                choice = aggregate_joint(column, prev, self.estimators, v)
            else:
                try:
                    choice = aggregate_joint_first_frame(column, self.estimators, v)
                except JointUnresolved:
                    choice = JointChoice(v, None, MISSING)
            joints.append(choice.position)
            sources.append(choice.chosen_estimator)

        if self.prev is None and all(s is None for s in sources):
            return None
        self.prev = tuple(joints)
        self.last_frame = frame
        c = confidence(joints, [None if p is None else p[:n] for p in proposals], self.cfg, sources)
        return AggregatedPose(frame, tuple(joints), c, tuple(sources), c >= self.cfg.gamma)


def filter_sequence(seq: PoseSequence, cfg: AggregationConfig) -> PoseSequence:
    """Mark each frame retained iff its confidence reaches ``gamma`` (inclusive)."""
    frames = tuple(replace(f, retained=f.confidence >= cfg.gamma) for f in seq.frames)
    return replace(seq, frames=frames)


def proposals_by_estimator(
    bundle: FrameBundle, estimators: Sequence[int]
) -> list[tuple[Keypoint, ...] | None]:
    slots: dict[int, tuple[Keypoint, ...]] = {}
    for p in bundle.proposals:
        if p.estimator not in estimators:
            raise ValueError(f"unknown estimator id {p.estimator}")
        if p.estimator in slots:
            raise ValueError(
                f"estimator {p.estimator} has several proposals at frame {bundle.frame}; "
                "associate persons first"
            )
        slots[p.estimator] = p.joints
    return [slots.get(k) for k in estimators]


def aggregate_sequence(
    bundles: Iterable[FrameBundle],
    cfg: AggregationConfig | None = None,
    estimators: Sequence[int] | None = None,
    person: int = 0,
    video: str = "",
    resolution: tuple[int, int] | None = None,
) -> PoseSequence:
    """Run both passes over one person's per-frame bundles (at most one
    proposal per estimator in each bundle)."""
    cfg = cfg or AggregationConfig()
    agg = SequenceAggregator(cfg, estimators)
    frames = []
    for bundle in bundles:
        out = agg.push(bundle.frame, proposals_by_estimator(bundle, agg.estimators))
        if out is not None:
            frames.append(out)
    seq = PoseSequence(person, tuple(frames), video, resolution)
    return filter_sequence(seq, cfg)
