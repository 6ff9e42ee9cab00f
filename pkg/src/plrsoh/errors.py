class PlrsohError(Exception):
    """Base class for errors raised by this package."""


class DataError(PlrsohError, ValueError):
    """Input data violates an invariant (ordering, positivity, ...)."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """A required column or field is missing."""


class CensoredCellError(DataError):
    """The capacity record never reaches the end-of-life threshold."""


class DegenerateFeatureError(PlrsohError, ValueError):
    """The splitting feature has no spread."""


class ClusteringError(PlrsohError, RuntimeError):
    pass


class KernelMatrixError(PlrsohError, RuntimeError):
    """Kernel matrix not positive definite even after jitter escalation."""
