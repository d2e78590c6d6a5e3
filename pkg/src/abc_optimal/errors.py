"""Exception hierarchy shared by all modules."""


class ABCOptimalError(Exception):
    """Base class for library errors."""


class UsageError(ABCOptimalError, ValueError):
    """Invalid arguments: wrong dimensionality, non-positive scales, empty inputs."""


class UnsupportedOperationError(ABCOptimalError, TypeError):
    pass


class NormalizationError(ABCOptimalError):
    """An un-normalized density has zero or non-finite mass."""


class QuadratureError(ABCOptimalError):
    """Adaptive quadrature failed to converge or hit a non-finite integrand."""


class DivergenceError(QuadratureError):
    """An efficiency functional is infinite for the given densities."""


class InadmissibleParameterError(ABCOptimalError, ValueError):
    pass


class InadmissibleProposalError(ABCOptimalError):
    """Proposal density vanishes where it must be positive."""


class DegeneratePopulationError(ABCOptimalError):
    pass


class StallError(ABCOptimalError):
    """ABC iteration consumed its proposal budget without enough acceptances."""

    def __init__(self, message, *, epsilon=None, iteration=None):
        super().__init__(message)
        self.epsilon = epsilon
        self.iteration = iteration


class ConvergenceError(ABCOptimalError):
    pass
