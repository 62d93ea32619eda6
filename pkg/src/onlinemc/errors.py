"""Exception types shared across the package."""


class CompletionError(Exception):
    """Base class for errors raised by onlinemc."""


class DimensionError(CompletionError, ValueError):
    """Operands have incompatible shapes or out-of-range indices."""


class DataError(CompletionError, ValueError):
    """Malformed or out-of-scale input data."""


class NumericalError(CompletionError, ArithmeticError):
    """A numerical routine produced non-finite output or failed to converge."""
