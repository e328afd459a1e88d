"""Exception hierarchy shared by all modules."""


class SmolprofError(Exception):
    """Base class for all errors raised by this package."""


class InvalidRange(SmolprofError, ValueError):
    pass


class NonFiniteValue(SmolprofError, ValueError):
    pass


class ExtrapolationError(SmolprofError, ValueError):
    pass


class GridKindError(SmolprofError, ValueError):
    pass


class DomainError(SmolprofError, ValueError):
    pass


class ConstraintViolation(SmolprofError, ValueError):
    pass


class SingularIntegrand(SmolprofError, ArithmeticError):
    pass


class ClassMismatch(SmolprofError, ValueError):
    pass


class InvalidInitialization(SmolprofError, ValueError):
    pass


class NoConvergence(SmolprofError, RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    The last iterate is attached as ``partial`` so callers can persist it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StabilityViolation(SmolprofError, ValueError):
    pass


class InsufficientResolution(SmolprofError, ValueError):
    pass


class OverflowGuard(SmolprofError, ArithmeticError):
    pass


class TauOutOfRange(UserWarning):
    """A computed tau lies outside the admissible open interval."""


class MonotonicityWarning(UserWarning):
    """A quantity that should be nonincreasing increased beyond tolerance."""
