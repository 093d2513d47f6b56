"""6-DoF parallel-jaw grasp proposal from single-view point clouds with completion-derived shape features."""

from .cloud import Cloud, read_ply, write_ply
from .errors import (
    ArgumentError,
    CheckpointError,
    CheckpointMissingError,
    DegenerateRotationError,
    DimensionError,
    FormatError,
    PcfGraspError,
    TrainingError,
    ValidationError,
)
from .grasp import ContactGrasp, GraspPose, GripperModel, adds_distance, contact_to_pose, orthonormalize
from .kernels import NeighborGroup, associate_labels, fps, knn, query_ball
from .net import NetConfig, decode_grasps, forward
from .pcf import PcfConfig, pcf_forward
from .score_filter import RobotFrame, apply_filter, direction_score, travel_direction
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "CheckpointError",
    "CheckpointMissingError",
    "Cloud",
    "ContactGrasp",
    "DegenerateRotationError",
    "DimensionError",
    "FormatError",
    "GraspPose",
    "GripperModel",
    "NeighborGroup",
    "NetConfig",
    "PcfConfig",
    "PcfGraspError",
    "RobotFrame",
    "Tensor",
    "TrainingError",
    "ValidationError",
    "adds_distance",
    "apply_filter",
    "associate_labels",
    "contact_to_pose",
    "decode_grasps",
    "direction_score",
    "forward",
    "fps",
    "knn",
    "orthonormalize",
    "pcf_forward",
    "query_ball",
    "read_ply",
    "write_ply",
]
