"""Exception hierarchy shared by every module."""


class G0Error(Exception):
    """Base class for all errors raised by g0reg."""


class DomainError(G0Error, ValueError):
    """An argument lies outside the domain of the function."""


class MomentDiverges(G0Error, ArithmeticError):
    """The requested moment is infinite for the given roughness."""


class NonFinite(G0Error, ArithmeticError):
    """A likelihood quantity over- or underflowed."""


class SingularInformation(G0Error, ArithmeticError):
    """An information matrix (or its beta block) is not positive definite."""


class DegenerateTheta(G0Error, ArithmeticError):
    """The Schur complement of the alpha block is not positive."""


class VarianceUndefined(G0Error, ArithmeticError):
    """The fitted roughness is >= -2, so Var(Z) does not exist."""


class LeverageAtOne(G0Error, ArithmeticError):
    """Some observation has leverage numerically equal to one."""


class NotConverged(G0Error, RuntimeError):
    """The optimizer stopped before meeting the gradient tolerance.

    The best-so-far fit is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
