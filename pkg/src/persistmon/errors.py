"""Exception types shared across the package."""


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class InputError(ValueError):
    """Rejected input data (non-finite targets, malformed configs)."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures."""


class SingularModelError(NumericalError):
    """A covariance matrix could not be factorized even with jitter."""

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class ConditioningError(NumericalError):
    """A quantity that must be strictly positive is not."""


class FieldFormatError(ValueError):
    """A raster file could not be parsed."""
