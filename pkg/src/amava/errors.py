"""Exception types shared across the pipeline."""


class AmavaError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(AmavaError):
    """Frame or channel dimensions do not line up."""


class FrameTooSmallError(AmavaError):
    """Frame is too small for the configured flow pyramid."""


class DegenerateVarianceError(AmavaError):
    """A feature column has zero variance; the scaler cannot be fit."""


class MissingClassError(AmavaError):
    """Training data does not contain every movement class."""


class ModelFormatError(AmavaError):
    """Model container file is corrupt or has unexpected tensor shapes."""


class SkipSignal(AmavaError):
    """A backend call failed in a way that drops the batch, never blocks it."""


class BackendTimeout(SkipSignal):
    """Backend did not answer within its declared budget."""


class BackendFailure(SkipSignal):
    """Backend raised or returned an unusable result."""


class CacheIOError(AmavaError):
    """Audio store could not read or write the cache directory."""


class MonotonicityError(AmavaError):
    """A playback timestamp moved backwards."""


class SessionClosedError(AmavaError):
    """Frame offered to a session that has already been closed."""


class ConfigError(AmavaError):
    """Server configuration is missing or invalid; names the offending key."""


class MalformedRecordError(AmavaError):
    """An event-log line could not be parsed; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
