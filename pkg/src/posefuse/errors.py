"""Exception types. Every error carries a stable machine-readable ``code``."""

from __future__ import annotations


class PoseFuseError(ValueError):
    code = "POSEFUSE_ERROR"


class NeckUndefined(PoseFuseError):
    code = "NECK_UNDEFINED"


class HeadLengthUndefined(PoseFuseError):
    code = "HEAD_LENGTH_UNDEFINED"


class DistanceUndefined(PoseFuseError):
    code = "DISTANCE_UNDEFINED"


class JointUnresolved(PoseFuseError):
    code = "JOINT_UNRESOLVED"


class ParseError(PoseFuseError):
    code = "PARSE_ERROR"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FormatMismatch(PoseFuseError):
    code = "FORMAT_MISMATCH"


class BoxUndefined(PoseFuseError):
    code = "BOX_UNDEFINED"


class Unassignable(PoseFuseError):
    code = "UNASSIGNABLE"


class InsufficientData(PoseFuseError):
    code = "INSUFFICIENT_DATA"


class InvalidDistribution(PoseFuseError):
    code = "INVALID_DISTRIBUTION"


class EmptyEval(PoseFuseError):
    code = "EMPTY_EVAL"


class InvalidParams(PoseFuseError):
    code = "INVALID_PARAMS"


class ResolutionMismatch(PoseFuseError):
    code = "RESOLUTION_MISMATCH"


class AlignmentError(PoseFuseError):
    code = "ALIGNMENT_ERROR"

    def __init__(self, message: str, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)
