"""Exception hierarchy. The CLI maps these onto process exit codes."""


class NavlabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NavlabError):
    """Bad argument or malformed input data."""


class ShapeError(ValidationError):
    """Tensor shapes do not conform; the message names both shapes."""


class DegenerateMaskError(ValidationError):
    """Softmax row with every entry masked out."""


class DisconnectedError(NavlabError):
    """No path between the requested nodes."""


class GenerationExhaustedError(NavlabError):
    """Sampler could not find a feasible episode within its retry budget."""


class VocabError(ValidationError):
    """Token or landmark id outside the configured vocabulary."""


class SequenceLengthError(ValidationError):
    """Encoder input longer than the configured maximum."""


class IllegalMoveError(NavlabError):
    """Agent tried to move to a node that is not reachable in one hop."""


class LabelError(NavlabError):
    """Training label refers to a node missing from the memory graph."""


class EmptyInputError(ValidationError):
    """An operation that needs at least one element got none."""


class EnvReferenceError(NavlabError):
    """Episode references an environment that was not provided."""


class TrajectoryError(ValidationError):
    """Trajectory contains a pair of consecutive nodes with no edge."""


class ConfigError(ValidationError):
    """Unknown key, missing key, or invalid value in a config document."""


class CheckpointVersionError(NavlabError):
    """Checkpoint format version does not match this code."""


class CorruptCheckpointError(NavlabError):
    """Checkpoint file is truncated or fails its integrity check."""


class NonFiniteLossError(NavlabError):
    """Training loss became NaN/Inf; carries a diagnostic payload."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class EvaluationError(NavlabError):
    """Objective returned a non-finite value during a gradient check."""
