"""Per-video fusion: association followed by streaming aggregation per person."""

from __future__ import annotations

from typing import Sequence

from .ingest import associate_persons, default_match_threshold, merge_bundles
from .skeleton import AggregatedPose, FrameBundle, PoseSequence
from .sst import AggregationConfig, SequenceAggregator, filter_sequence


def fuse_video(
    streams: Sequence[Sequence[FrameBundle]],
    cfg: AggregationConfig | None = None,
    resolution: tuple[int, int] = (640, 480),
    tau_match: float | None = None,
    persons: str = "all",
    video: str = "",
) -> list[PoseSequence]:
    """Fuse one video given one bundle stream per estimator (estimator ids 1..M
    in stream order). Returns one filtered sequence per tracked person.

    ``persons="primary"`` keeps only the person with the most fused frames
    (ties go to the lowest id).
    """
    if persons not in ("all", "primary"):
        raise ValueError("persons must be 'all' or 'primary'")
    cfg = cfg or AggregationConfig(estimator_count_M=len(streams))
    estimators = tuple(range(1, len(streams) + 1))
    for k, stream in zip(estimators, streams):
        for b in stream:
            if any(p.estimator != k for p in b.proposals):
                raise ValueError(f"stream {k} holds proposals tagged with another estimator")
    tau = default_match_threshold(resolution) if tau_match is None else tau_match

    aggregators: dict[int, SequenceAggregator] = {}
    latest: dict[int, AggregatedPose] = {}
    frames: dict[int, list[AggregatedPose]] = {}
    next_id = 0
    for bundle in merge_bundles(streams):
        matches = associate_persons(bundle, latest, tau, next_id, estimators)
        for pid, slots in matches:
            next_id = max(next_id, pid + 1)
            agg = aggregators.setdefault(pid, SequenceAggregator(cfg, estimators))
            props = [None if slots[k] is None else slots[k].joints for k in estimators]
            out = agg.push(bundle.frame, props)
            if out is None:
                continue
            latest[pid] = out
            frames.setdefault(pid, []).append(out)

    seqs = [
        filter_sequence(PoseSequence(pid, tuple(fr), video, resolution), cfg)
        for pid, fr in sorted(frames.items())
    ]
    if persons == "primary" and seqs:
        seqs = [max(seqs, key=lambda s: (len(s.frames), -s.person))]
    return seqs
