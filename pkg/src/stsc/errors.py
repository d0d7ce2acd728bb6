"""Exception types raised across the package."""


class StscError(Exception):
    """Base class for every error raised by this package."""

    kind = "error"


class DimensionError(StscError, ValueError):
    kind = "dimension"


class ConfigError(StscError, ValueError):
    kind = "config"


class DataError(StscError, ValueError):
    kind = "data"


class StateError(StscError, RuntimeError):
    kind = "state"


class TrainingError(StscError, RuntimeError):
    kind = "training"


class StscIOError(StscError, OSError):
    kind = "io"
