"""Exception types shared across the package."""


class WeldwatchError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(WeldwatchError):
    """Invalid configuration value or incompatible option combination."""


class DataError(WeldwatchError):
    """Input data violates a documented precondition."""


class ShapeError(DataError):
    """Vector or matrix dimensions do not match the model/bank."""


class FitError(WeldwatchError):
    """Detector fitting failed; the message names the offending class."""


class ParseError(DataError):
    """CSV or config parsing failed; the message carries the line number."""


class RestoreError(WeldwatchError):
    """A persisted artifact is missing, truncated, or fails its integrity check."""


class RequestError(WeldwatchError):
    """A service request references unknown entities or stale state."""
