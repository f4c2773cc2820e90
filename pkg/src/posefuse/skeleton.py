"""Core pose types, the shared 13-joint layout and the canonical JSON format."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import HeadLengthUndefined, NeckUndefined, ParseError

CARRIED_FORWARD = -1  # per-joint source tag when the previous aggregate was reused


class JointId(enum.IntEnum):
    HEAD = 0
    L_SHOULDER = 1
    R_SHOULDER = 2
    L_ELBOW = 3
    R_ELBOW = 4
    L_WRIST = 5
    R_WRIST = 6
    L_HIP = 7
    R_HIP = 8
    L_KNEE = 9
    R_KNEE = 10
    L_ANKLE = 11
    R_ANKLE = 12

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "JointId":
        return cls[label.upper()]


NUM_JOINTS = len(JointId)
JOINT_NAMES = tuple(j.label for j in JointId)


@dataclass(frozen=True, slots=True)
class Keypoint:
    x: float
    y: float
    score: float | None = None
    valid: bool = True

    def __post_init__(self):
        if self.valid and not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"valid keypoint needs finite coordinates, got ({self.x}, {self.y})")

    @classmethod
    def missing(cls) -> "Keypoint":
        return cls(0.0, 0.0, None, False)

    def translated(self, dx: float, dy: float) -> "Keypoint":
        if not self.valid:
            return self
        return Keypoint(self.x + dx, self.y + dy, self.score, True)


MISSING = Keypoint.missing()


@dataclass(frozen=True, slots=True)
class PoseProposal:
    """One estimator's pose hypothesis for one detection in one frame."""

    estimator: int
    frame: int
    person: int
    joints: tuple[Keypoint, ...]

    def __post_init__(self):
        if len(self.joints) != NUM_JOINTS:
            raise ValueError(f"a proposal has {NUM_JOINTS} joints, got {len(self.joints)}")
        if self.frame < 0:
            raise ValueError("frame index must be >= 0")


@dataclass(frozen=True)
class FrameBundle:
    """All proposals observed at frame ``frame``, from any estimator."""

    frame: int
    proposals: tuple[PoseProposal, ...] = ()

    def __post_init__(self):
        if any(p.frame != self.frame for p in self.proposals):
            raise ValueError("all proposals in a bundle must share its frame index")


@dataclass(frozen=True, slots=True)
class AggregatedPose:
    frame: int
    joints: tuple[Keypoint, ...]
    confidence: float
    sources: tuple[int | None, ...] = ()
    retained: bool = True


@dataclass(frozen=True)
class PoseSequence:
    person: int
    frames: tuple[AggregatedPose, ...]
    video: str = ""
    resolution: tuple[int, int] | None = None

    def __post_init__(self):
        ts = [f.frame for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frames must be strictly increasing in t")

    def by_frame(self) -> dict[int, AggregatedPose]:
        return {f.frame: f for f in self.frames}

    def retained_only(self) -> "PoseSequence":
        return PoseSequence(
            self.person, tuple(f for f in self.frames if f.retained), self.video, self.resolution
        )


def neck_position(pose: Sequence[Keypoint]) -> Keypoint:
    """Midpoint of the two shoulders; the 13-joint layout has no stored neck."""
    ls, rs = pose[JointId.L_SHOULDER], pose[JointId.R_SHOULDER]
    if not (ls.valid and rs.valid):
        raise NeckUndefined("neck needs both shoulders")
    return Keypoint((ls.x + rs.x) / 2.0, (ls.y + rs.y) / 2.0, None, True)


def head_length(pose: Sequence[Keypoint]) -> float:
    """Pixel distance between the head joint and the derived neck."""
    head = pose[JointId.HEAD]
    if not head.valid:
        raise HeadLengthUndefined("head joint is invalid")
    try:
        neck = neck_position(pose)
    except NeckUndefined as exc:
        raise HeadLengthUndefined(str(exc)) from exc
    return math.hypot(head.x - neck.x, head.y - neck.y)


# -- canonical JSON ---------------------------------------------------------


def _num(v: float) -> float | None:
    return v if math.isfinite(v) else None


def _joint_to_json(kp: Keypoint) -> list:
    return [_num(kp.x), _num(kp.y), kp.score, kp.valid]


def _joint_from_json(raw) -> Keypoint:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ParseError(f"joint must be [x, y, score, valid], got {raw!r}")
    x, y, score, valid = raw
    x = math.nan if x is None else float(x)
    y = math.nan if y is None else float(y)
    score = None if score is None else float(score)
    return Keypoint(x, y, score, bool(valid))


def frame_to_json(pose: AggregatedPose) -> dict:
    out = {
        "t": pose.frame,
        "confidence": pose.confidence,
        "retained": pose.retained,
        "joints": [_joint_to_json(kp) for kp in pose.joints],
    }
    if pose.sources:
        out["sources"] = list(pose.sources)
    return out


def frame_from_json(raw: dict, n_joints: int = NUM_JOINTS) -> AggregatedPose:
    joints = tuple(_joint_from_json(j) for j in raw["joints"])
    if len(joints) != n_joints:
        raise ParseError(f"frame t={raw.get('t')} has {len(joints)} joints, expected {n_joints}")
    return AggregatedPose(
        frame=int(raw["t"]),
        joints=joints,
        confidence=float(raw.get("confidence", 1.0)),
        sources=tuple(raw.get("sources", ())),
        retained=bool(raw.get("retained", True)),
    )


def sequences_to_dict(
    seqs: Iterable[PoseSequence], video: str = "", resolution: tuple[int, int] | None = None
) -> dict:
    seqs = list(seqs)
    if seqs:
        video = video or seqs[0].video
        resolution = resolution or seqs[0].resolution
    return {
        "video": video,
        "resolution": list(resolution) if resolution else None,
        "persons": [
            {"id": s.person, "frames": [frame_to_json(f) for f in s.frames]} for s in seqs
        ],
    }


def dumps_sequences(seqs: Iterable[PoseSequence], video: str = "", resolution=None) -> str:
    return json.dumps(sequences_to_dict(seqs, video, resolution), separators=(",", ":")) + "\n"


def sequences_from_dict(doc: dict) -> list[PoseSequence]:
    try:
        video = str(doc.get("video", ""))
        res = doc.get("resolution")
        resolution = (int(res[0]), int(res[1])) if res else None
        return [
            PoseSequence(
                int(p["id"]),
                tuple(frame_from_json(f) for f in p["frames"]),
                video,
                resolution,
            )
            for p in doc["persons"]
        ]
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"not a canonical pose document: {exc!r}") from exc


def loads_sequences(text: str | bytes) -> list[PoseSequence]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, len(text[: exc.pos].encode("utf-8"))) from exc
    return sequences_from_dict(doc)
