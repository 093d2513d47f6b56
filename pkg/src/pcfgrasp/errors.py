"""Exception hierarchy shared by every module.

Each class carries a stable ``code`` that the command-line front end prints
in its single-line error record.
"""


class PcfGraspError(Exception):
    code = "ERROR"


class DimensionError(PcfGraspError, ValueError):
    code = "DIMENSION"


class ValidationError(PcfGraspError, ValueError):
    code = "VALIDATION"


class ArgumentError(PcfGraspError, ValueError):
    code = "ARGUMENT"


class DegenerateRotationError(PcfGraspError, ValueError):
    code = "DEGENERATE_ROTATION"


class TrainingError(PcfGraspError, RuntimeError):
    code = "TRAINING"


class CheckpointError(PcfGraspError, OSError):
    code = "CHECKPOINT"


class CheckpointMissingError(CheckpointError):
    code = "CHECKPOINT_MISSING"


class FormatError(PcfGraspError, OSError):
    code = "FORMAT"
