"""Exception types shared across the package."""


class TFNetError(Exception):
    """Base class for every error raised by this library."""


class DimensionError(TFNetError, ValueError):
    """Operands have incompatible shapes or sizes."""


class NumericError(TFNetError, ArithmeticError):
    """A non-finite value was detected where one is not allowed."""


class DataError(TFNetError):
    """Dataset-level ingestion failure (unreadable file, too many bad lines)."""


class RecordError(DataError):
    """A single malformed input record.

    Carries the 1-based line number when the caller knows it, so readers
    can decide whether to skip the record or abort the whole file.
    """

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(TFNetError, ValueError):
    """Invalid run configuration or invalid CLI usage."""


class SnapshotError(TFNetError):
    """Malformed, truncated, or incompatible model snapshot."""


class MetricError(TFNetError, ValueError):
    """A metric is undefined for the given inputs."""
