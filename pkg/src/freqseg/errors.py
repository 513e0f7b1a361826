"""Exception hierarchy shared across the package."""


class FreqSegError(Exception):
    """Base class for all package errors."""


class ConfigError(FreqSegError, ValueError):
    """Inconsistent shapes, options or module toggles."""


class ShapeError(ConfigError):
    """An array does not have the shape an operation requires."""


class ValidationError(FreqSegError, ValueError):
    """Input data violates its declared domain (e.g. a non-binary mask)."""


class UsageError(FreqSegError, RuntimeError):
    """An API was called out of order, e.g. backward without a forward."""
