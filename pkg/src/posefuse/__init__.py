"""Multi-estimator 2D pose fusion, pseudo ground-truth generation and evaluation."""

from .errors import PoseFuseError
from .ingest import associate_persons, parse_estimator_output
from .metrics import EvalConfig, confidence_error_histogram, mpjpe_normalized, pckh
from .pipeline import fuse_video
from .pseudo_gt import (
    AnchorCodebook,
    PseudoBox,
    assign_anchor_class,
    classification_loss,
    derive_box,
    export_training_targets,
    fit_anchor_codebook,
    normalize_pose_for_similarity,
)
from .skeleton import (
    CARRIED_FORWARD,
    AggregatedPose,
    FrameBundle,
    JointId,
    Keypoint,
    PoseProposal,
    PoseSequence,
    head_length,
    neck_position,
)
from .sst import (
    AggregationConfig,
    aggregate_joint,
    aggregate_joint_first_frame,
    aggregate_sequence,
    confidence,
    euclidean_distance,
    filter_sequence,
)

__version__ = "0.1.0"
