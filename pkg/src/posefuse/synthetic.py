"""Synthetic motion traces and simulated estimator failure modes.

Two failure families are modelled: top-down estimators that lose a whole
person in some frames, and bottom-up estimators that lose individual joints.
Everything is seeded explicitly; no global RNG state is touched.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InvalidParams
from .ingest import merge_bundles
from .metrics import EvalConfig, evaluate
from .skeleton import (
    MISSING,
    NUM_JOINTS,
    AggregatedPose,
    FrameBundle,
    JointId,
    Keypoint,
    PoseProposal,
    PoseSequence,
)
from .sst import AggregationConfig, aggregate_sequence


@dataclass(frozen=True)
class TraceParams:
    head: float = 24.0
    torso: float = 60.0
    shoulder_width: float = 40.0
    hip_width: float = 28.0
    upper_arm: float = 30.0
    forearm: float = 27.0
    thigh: float = 44.0
    shin: float = 42.0
    gait_hz: float = 1.0
    fps: float = 30.0
    arm_swing: float = 0.5  # rad
    forearm_bend: float = 0.4  # rad, peak extra flexion
    leg_swing: float = 0.45  # rad
    knee_bend: float = 0.6  # rad, peak flexion
    speed: float = 1.0  # px / frame
    start: tuple[float, float] = (320.0, 170.0)  # neck position at t=0
    resolution: tuple[int, int] = (640, 480)
    jitter_lengths: float = 0.1  # relative per-seed perturbation of limb lengths

    def validate(self) -> None:
        lengths = (self.head, self.torso, self.shoulder_width, self.hip_width,
                   self.upper_arm, self.forearm, self.thigh, self.shin)  # fmt: skip
        if any(not (math.isfinite(v) and v > 0) for v in lengths):
            raise InvalidParams("limb lengths must be positive and finite")
        if not 0 <= self.jitter_lengths < 1:
            raise InvalidParams("jitter_lengths must be in [0, 1)")
        if self.fps <= 0 or self.gait_hz < 0 or self.speed < 0:
            raise InvalidParams("fps must be > 0, gait_hz and speed >= 0")

    def max_joint_step(self) -> float:
        """Upper bound on any joint's per-frame displacement."""
        w = 2 * math.pi * self.gait_hz / self.fps
        scale = 1 + self.jitter_lengths
        arm = (self.upper_arm + self.forearm) * self.arm_swing * w + self.forearm * self.forearm_bend * w / 2
        leg = (self.thigh + self.shin) * self.leg_swing * w + self.shin * self.knee_bend * w / 2
        return self.speed + scale * max(arm, leg)


@dataclass
class MotionTrace:
    gt: PoseSequence
    params: TraceParams
    limbs: dict[str, float] = field(default_factory=dict)


def _pose_at(phase: float, neck: np.ndarray, L: dict[str, float], p: TraceParams) -> list[np.ndarray]:
    def limb(origin, angle, length):
        # angle measured from straight down, image y grows downwards
        return origin + length * np.array([math.sin(angle), math.cos(angle)])

    head = neck + np.array([0.0, -L["head"]])
    ls = neck + np.array([L["shoulder_width"] / 2, 0.0])
    rs = neck - np.array([L["shoulder_width"] / 2, 0.0])
    hip_c = neck + np.array([0.0, L["torso"]])
    lh = hip_c + np.array([L["hip_width"] / 2, 0.0])
    rh = hip_c - np.array([L["hip_width"] / 2, 0.0])

    out = {}
    for side, sgn, sh, hp in (("l", 1.0, ls, lh), ("r", -1.0, rs, rh)):
        arm = sgn * p.arm_swing * math.sin(phase)
        fore = arm + p.forearm_bend * (1 + math.sin(phase + sgn * math.pi / 2)) / 2
        elbow = limb(sh, arm, L["upper_arm"])
        wrist = limb(elbow, fore, L["forearm"])
        thigh = -sgn * p.leg_swing * math.sin(phase)
        shin = thigh - p.knee_bend * (1 - math.cos(phase + (0 if sgn > 0 else math.pi))) / 2
        knee = limb(hp, thigh, L["thigh"])
        ankle = limb(knee, shin, L["shin"])
        out[side] = (sh, elbow, wrist, hp, knee, ankle)
    l, r = out["l"], out["r"]
    return [head, l[0], r[0], l[1], r[1], l[2], r[2], l[3], r[3], l[4], r[4], l[5], r[5]]


def generate_trace(params: TraceParams | None = None, T: int = 100, seed: int = 0) -> MotionTrace:
    """A walking figure seen from the front, seeded limb proportions and phase."""
    params = params or TraceParams()
    params.validate()
    if T < 1:
        raise InvalidParams("T must be >= 1")
    rng = np.random.default_rng(seed)
    names = ("head", "torso", "shoulder_width", "hip_width", "upper_arm", "forearm", "thigh", "shin")
    factors = rng.uniform(1 - params.jitter_lengths, 1 + params.jitter_lengths, len(names))
    limbs = {n: getattr(params, n) * f for n, f in zip(names, factors)}
    phase0 = rng.uniform(0, 2 * math.pi)
    direction = 1.0 if rng.random() < 0.5 else -1.0

    w = 2 * math.pi * params.gait_hz / params.fps
    frames = []
    for t in range(T):
        neck = np.array(params.start) + np.array([direction * params.speed * t, 0.0])
        pts = _pose_at(phase0 + w * t, neck, limbs, params)
        joints = tuple(Keypoint(float(q[0]), float(q[1]), 1.0, True) for q in pts)
        frames.append(AggregatedPose(t, joints, 1.0, (), True))
    gt = PoseSequence(0, tuple(frames), "synthetic", params.resolution)
    return MotionTrace(gt, params, limbs)


@dataclass(frozen=True)
class CorruptionProfile:
    name: str = "identity"
    jitter_sigma: float = 0.0
    joint_dropout_p: float = 0.0
    person_miss_p: float = 0.0
    outlier_p: float = 0.0
    outlier_scale: float = 0.0
    bias: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("joint_dropout_p", "person_miss_p", "outlier_p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParams(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sigma < 0 or self.outlier_scale < 0:
            raise InvalidParams("jitter_sigma and outlier_scale must be >= 0")

    @classmethod
    def from_dict(cls, raw: dict) -> "CorruptionProfile":
        raw = dict(raw)
        if "bias" in raw:
            raw["bias"] = tuple(float(b) for b in raw["bias"])
        return cls(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bias"] = list(self.bias)
        return d


def simulate_estimator(
    trace: MotionTrace, profile: CorruptionProfile, estimator: int = 1
) -> list[FrameBundle]:
    """Corrupt the GT trace into one estimator's per-frame bundles.

    Per frame the whole person is dropped with ``person_miss_p``; otherwise
    each joint is dropped with ``joint_dropout_p``, else placed at
    GT + bias + Gaussian jitter, or with ``outlier_p`` at GT plus an offset of
    length ``outlier_scale`` in a uniform direction. All draws happen every
    frame so the random stream does not depend on earlier outcomes.
    """
    rng = np.random.default_rng(profile.seed)
    bx, by = profile.bias
    bundles = []
    for gt in trace.gt.frames:
        miss = rng.random()
        drop = rng.random(NUM_JOINTS)
        noise = rng.normal(0.0, 1.0, (NUM_JOINTS, 2)) * profile.jitter_sigma
        outlier = rng.random(NUM_JOINTS)
        angle = rng.uniform(0.0, 2 * math.pi, NUM_JOINTS)
        if miss < profile.person_miss_p:
            bundles.append(FrameBundle(gt.frame, ()))
            continue
        joints = []
        for v, g in enumerate(gt.joints):
            if drop[v] < profile.joint_dropout_p:
                joints.append(MISSING)
            elif outlier[v] < profile.outlier_p:
                joints.append(
                    Keypoint(
                        g.x + profile.outlier_scale * math.cos(angle[v]),
                        g.y + profile.outlier_scale * math.sin(angle[v]),
                        1.0,
                        True,
                    )
                )
            else:
                joints.append(Keypoint(g.x + bx + noise[v, 0], g.y + by + noise[v, 1], 1.0, True))
        bundles.append(FrameBundle(gt.frame, (PoseProposal(estimator, gt.frame, 0, tuple(joints)),)))
    return bundles


def bundles_to_sequence(bundles: Sequence[FrameBundle], person: int = 0, video: str = "") -> PoseSequence:
    """View a single-person estimator stream as a sequence (every frame retained)."""
    frames = []
    for b in bundles:
        if b.proposals:
            p = b.proposals[0]
            frames.append(AggregatedPose(b.frame, p.joints, 1.0, (p.estimator,) * NUM_JOINTS, True))
    return PoseSequence(person, tuple(frames), video)


DEFAULT_PROFILES = (
    # top-down style: loses the whole person
    CorruptionProfile("top_down", jitter_sigma=3.0, joint_dropout_p=0.02, person_miss_p=0.3,
                      outlier_p=0.02, outlier_scale=100.0),
    # bottom-up style: loses occluded joints
    CorruptionProfile("bottom_up", jitter_sigma=3.0, joint_dropout_p=0.3, person_miss_p=0.02,
                      outlier_p=0.02, outlier_scale=100.0),
    CorruptionProfile("jittery", jitter_sigma=8.0, joint_dropout_p=0.05, person_miss_p=0.05,
                      outlier_p=0.12, outlier_scale=120.0),
)  # fmt: skip


def trial_seeds(seed: int, trial: int, n_estimators: int) -> tuple[int, list[int]]:
    """Independent per-trial seeds: one for the trace, one per estimator."""
    ss = np.random.SeedSequence(seed, spawn_key=(trial,))
    children = ss.spawn(1 + n_estimators)
    states = [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]
    return states[0], states[1:]


def run_trial(
    trial: int,
    seed: int = 0,
    profiles: Sequence[CorruptionProfile] = DEFAULT_PROFILES,
    T: int = 100,
    params: TraceParams | None = None,
    agg_cfg: AggregationConfig | None = None,
    alpha: float = 2.0,
) -> dict:
    trace_seed, est_seeds = trial_seeds(seed, trial, len(profiles))
    trace = generate_trace(params, T, trace_seed)
    streams = [
        simulate_estimator(trace, replace(prof, seed=s), k)
        for k, (prof, s) in enumerate(zip(profiles, est_seeds), start=1)
    ]
    cfg = agg_cfg or AggregationConfig(estimator_count_M=len(profiles))
    fused = aggregate_sequence(merge_bundles(streams), cfg, person=0, video="synthetic")
    ecfg = EvalConfig(alpha=alpha)
    methods = {prof.name: bundles_to_sequence(s) for prof, s in zip(profiles, streams)}
    methods["sst_a"] = fused
    result = {"trial": trial, "seed": trace_seed, "methods": {}}
    for name, seq in methods.items():
        rep = evaluate([(seq, trace.gt)], ecfg)
        result["methods"][name] = {"pckh": rep.pckh, "mpjpe": rep.mpjpe, "miss_rate": rep.miss_rate}
    result["retained"] = sum(f.retained for f in fused.frames)
    result["frames"] = len(fused.frames)
    return result


def summarize_trials(results: Sequence[dict], fused: str = "sst_a") -> dict:
    """Win rate of the fused output (PCKh >= every expert) and mean margin over the best expert."""
    experts = [m for m in results[0]["methods"] if m != fused]
    wins, margins = 0, []
    for r in results:
        m = r["methods"]
        best = max(m[e]["pckh"] for e in experts)
        wins += m[fused]["pckh"] >= best
        margins.append(m[fused]["pckh"] - best)
    means = {
        name: {
            "pckh": float(np.mean([r["methods"][name]["pckh"] for r in results])),
            "mpjpe": float(np.nanmean([r["methods"][name]["mpjpe"] for r in results])),
        }
        for name in results[0]["methods"]
    }
    return {
        "trials": len(results),
        "win_rate": wins / len(results),
        "mean_improvement_over_best": float(np.mean(margins)),
        "mean": means,
    }
