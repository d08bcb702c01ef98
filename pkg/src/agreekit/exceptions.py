"""Exception hierarchy shared across agreekit."""


class AgreekitError(Exception):
    """Base class for all agreekit errors."""


class PreconditionError(AgreekitError, ValueError):
    """An input violates a documented precondition."""


# linear algebra


class NotAProjection(PreconditionError):
    pass


class RankDeficientBasis(PreconditionError):
    pass


class SubspacesNotComplementary(PreconditionError):
    pass


class EigenFailure(AgreekitError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


# graphs


class InvalidModelParameters(PreconditionError):
    pass


class GraphGenerationFailed(AgreekitError):
    pass


class CombinatorialBudgetExceeded(AgreekitError):
    """Exact enumeration was abandoned; the instance is too dense."""


class SearchBudgetExceeded(AgreekitError):
    """The partition search ran out of budget. The answer is unknown, not negative."""


# design


class PatternViolation(PreconditionError):
    pass


class DesignInfeasible(AgreekitError):
    """No certified agreement protocol was produced."""


class NoStableFeasiblePoint(DesignInfeasible):
    pass


class EmptyKernel(NoStableFeasiblePoint):
    """The edge-weight constraints only admit a = 0."""


class ComplementarityViolation(DesignInfeasible):
    pass


# simulation


class InsufficientTrace(AgreekitError):
    pass


class StiffnessWarning(UserWarning):
    pass
