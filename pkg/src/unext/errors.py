"""Exception hierarchy shared by every module."""


class UnextError(Exception):
    """Base class for all package errors."""


class NonHermitian(UnextError):
    pass


class NegativeOperator(UnextError):
    pass


class SupportViolation(UnextError):
    pass


class ShapeMismatch(UnextError):
    pass


class InvalidPermutation(UnextError):
    pass


class DimensionMismatch(UnextError):
    pass


class InvalidProbability(UnextError, ValueError):
    pass


class InvalidDimension(UnextError, ValueError):
    pass


class InvalidSuperchannel(UnextError):
    pass


class InvalidExtension(UnextError):
    pass


class NotApplicable(UnextError):
    pass


class SolverFailure(UnextError):
    """Raised when a backend cannot return a usable solution."""

    def __init__(self, message, status=None, report=None):
        super().__init__(message)
        self.status = status
        self.report = report


class InfeasibleModel(SolverFailure):
    """A model that should always be feasible came back infeasible."""


class ProblemTooLarge(UnextError):
    pass
