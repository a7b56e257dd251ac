"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`GraspBCIError`, so the CLI can turn it into a machine-readable
error record.
"""


class GraspBCIError(Exception):
    """Base class for all package errors."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def record(self):
        return {"error": type(self).__name__, "message": str(self), **self.context}


# io_formats
class MissingKey(GraspBCIError):
    pass


class UnsupportedFormat(GraspBCIError):
    pass


class MalformedLine(GraspBCIError):
    pass


class LengthMismatch(GraspBCIError):
    pass


class SchemaError(GraspBCIError):
    pass


# preprocess
class InvalidBand(GraspBCIError):
    pass


class UnknownChannel(GraspBCIError):
    pass


class InvalidFactor(GraspBCIError):
    pass


class WindowOutOfRange(GraspBCIError):
    pass


# emg_gating
class WindowTooLarge(GraspBCIError):
    pass


class EmptyBaseline(GraspBCIError):
    pass


class BadLength(GraspBCIError):
    pass


# features / classifiers
class DegenerateEpoch(GraspBCIError):
    pass


class SingularComposite(GraspBCIError):
    pass


class SingularCovariance(GraspBCIError):
    pass


class MissingClass(GraspBCIError):
    pass


class ShapeMismatch(GraspBCIError):
    pass


# evaluate / synthgen / cli
class TooFewTrials(GraspBCIError):
    pass


class InvalidSpec(GraspBCIError):
    pass


class ConfigError(GraspBCIError):
    pass


class PipelineError(GraspBCIError):
    """Wraps an error raised inside one cross-validation cell."""
