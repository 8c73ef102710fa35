"""
Error hierarchy for the GTI tagging engine.

Every error carries:
- error_class: a stable, machine-readable name printed by the CLI
- exit_code: the process exit code the CLI returns for it

Exit codes: 2 usage/data, 3 numerical failure, 4 config mismatch.
"""


class GtiError(Exception):
    """Base class for every error raised by this package."""

    error_class = "GTI_ERROR"
    exit_code = 1


class ArgumentError(GtiError, ValueError):
    error_class = "BAD_ARGUMENT"
    exit_code = 2


class DimensionError(GtiError, ValueError):
    error_class = "DIMENSION_MISMATCH"
    exit_code = 4


class EmbeddingLookupError(GtiError, IndexError):
    error_class = "LOOKUP_ERROR"
    exit_code = 2


class ParseError(GtiError, ValueError):
    error_class = "PARSE_ERROR"
    exit_code = 2


class FeatureError(GtiError, ValueError):
    error_class = "FEATURE_ERROR"
    exit_code = 2


class EmbeddingFormatError(GtiError, ValueError):
    error_class = "FORMAT_ERROR"
    exit_code = 2


class DataNotFoundError(GtiError, FileNotFoundError):
    error_class = "DATA_NOT_FOUND"
    exit_code = 2


class NumericalError(GtiError, ArithmeticError):
    error_class = "NUMERICAL_FAILURE"
    exit_code = 3


class ConfigMismatchError(GtiError):
    error_class = "CONFIG_MISMATCH"
    exit_code = 4


class CheckpointError(GtiError):
    error_class = "CHECKPOINT_ERROR"
    exit_code = 4


class CheckpointVersionError(CheckpointError):
    error_class = "CHECKPOINT_VERSION"


class CheckpointTruncatedError(CheckpointError):
    error_class = "CHECKPOINT_TRUNCATED"


class CheckpointShapeError(CheckpointError):
    error_class = "CHECKPOINT_SHAPE"
