"""Exception types shared across the package."""


class DrofitError(Exception):
    """Base class for package errors."""


class ConfigError(DrofitError, ValueError):
    """An invalid configuration or parameter combination."""


class ShapeError(DrofitError, ValueError):
    """Operand shapes are incompatible."""


class NumericError(DrofitError, ArithmeticError):
    """A computation produced or met a non-finite value."""


class StreamError(DrofitError, RuntimeError):
    """Misuse of a streaming state (wrong cache shape, push after flush)."""


class DataError(DrofitError, ValueError):
    """Bad audio or manifest input."""
