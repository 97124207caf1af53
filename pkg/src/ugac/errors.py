"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NumericalError(RuntimeError):
    """A computation produced NaN or Inf."""


class DataError(ValueError):
    """Input data is missing, unreadable or inconsistent."""
