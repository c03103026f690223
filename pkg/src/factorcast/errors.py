"""Exception hierarchy shared across the package."""


class FactorcastError(Exception):
    pass


class ShapeError(FactorcastError, ValueError):
    pass


class ParameterError(FactorcastError, ValueError):
    pass


class ConfigurationError(FactorcastError, ValueError):
    pass


class UsageError(FactorcastError, RuntimeError):
    pass


class InstabilityError(FactorcastError, RuntimeError):
    pass


class FormatError(FactorcastError, ValueError):
    pass


class NonFiniteError(FactorcastError, FloatingPointError):
    """Raised when a gradient or loss stops being finite; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AggregationError(FactorcastError, RuntimeError):
    pass


class StaleDataError(FactorcastError, RuntimeError):
    """Dataset missing, or generated from a different config than the one in use."""
