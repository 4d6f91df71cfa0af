"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FlexMatchError(Exception):
    """Base class for every error raised by the package."""


class InvalidParamsError(FlexMatchError, ValueError):
    """Parameters violate a documented precondition."""


class ProbabilityOverflowError(InvalidParamsError):
    """An edge probability implied by the parameters exceeds one."""


class MissingWeightsError(FlexMatchError, ValueError):
    """A weighted operation was called on an unweighted graph."""


class NonConvergenceError(FlexMatchError, ArithmeticError):
    """An iterative solver hit its iteration cap above tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class RegimeError(FlexMatchError, ValueError):
    """Inputs fall outside the region where a certified bound holds."""


class CertificateViolation(FlexMatchError):
    """A checked inequality failed on some realization."""
