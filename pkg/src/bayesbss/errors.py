"""Exception hierarchy shared by every module of the package."""


class BSSError(Exception):
    """Base class for all errors raised by bayesbss."""


class DimensionError(BSSError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(BSSError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(BSSError, ArithmeticError):
    """A computation produced non-finite values."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class SingularSystemError(NumericError):
    """A linear system that must be solved is singular or numerically so."""


class DivisionGuardError(NumericError):
    """A closed-form coordinate update hit a zero denominator."""


class UnsupportedLawError(BSSError, ValueError):
    """The requested source law or mixing prior cannot be used by this algorithm."""


class ApproximationError(BSSError, ValueError):
    """The Laplace approximation is invalid at the current mode."""


class DivergenceError(NumericError):
    """An iterative estimator diverged; the partial trace is attached."""

    def __init__(self, message, trace=None, result=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.result = result
