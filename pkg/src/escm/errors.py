"""Exception hierarchy shared by every module."""


class EscmError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(EscmError, ValueError):
    """An argument lies outside the domain of the operation."""


class InfeasiblePoint(DomainError):
    """A (mu, sigma) pair that no Beta law can realize."""


class QuadratureFailure(EscmError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance."""


class InfeasibleReviewLoad(EscmError):
    pass


class InsufficientPool(EscmError):
    def __init__(self, participant, available, required):
        self.participant = participant
        self.available = available
        self.required = required
        super().__init__(
            f"participant {participant} has {available} eligible items, needs {required}"
        )


class EmptyElection(EscmError):
    pass


class DegenerateDenominator(EscmError, ArithmeticError):
    pass


class ZeroLikelihood(EscmError):
    pass


class AllZeroWeights(DomainError):
    pass


class DegenerateVariance(EscmError, ArithmeticError):
    pass


class TooLargeForExhaustive(EscmError):
    pass
