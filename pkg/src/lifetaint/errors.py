"""Exception types shared across the package."""


class LifetaintError(Exception):
    """Base class for all lifetaint errors."""


class ModelError(LifetaintError):
    """A life-cycle model file is malformed or internally inconsistent."""


class AppLoadError(LifetaintError):
    """An app IR file is malformed or fails validation."""


class AnalysisError(LifetaintError):
    """The taint engine hit an unrecoverable inconsistency while analyzing."""

    def __init__(self, message, location=None):
        if location is not None:
            message = "%s (at %s.%s[%d])" % (message, *location)
        super().__init__(message)
        self.location = location


class ConfigError(LifetaintError):
    """Bad run configuration (CLI arguments, source/sink config file)."""
