"""Exception hierarchy shared by all lagflow modules."""


class LagflowError(Exception):
    """Base class for every domain error raised by lagflow."""


class EmptyRegion(LagflowError):
    pass


class DegenerateLevel(LagflowError):
    """The level is too close to a critical value of H (speed below the floor)."""


class NoCycles(LagflowError):
    pass


class CuspDetected(LagflowError):
    pass


class ZeroArea(LagflowError):
    pass


class OnBoundary(LagflowError):
    pass


class TurnBudgetImpossible(LagflowError):
    pass


class BudgetTooSmall(LagflowError):
    """Discarding the exceptional-set budget cannot remove every inadmissible sample."""


class NotNested(LagflowError):
    pass


class OrientationMismatch(LagflowError):
    pass


class EmptyGoodSet(LagflowError):
    pass


class GraphOrderViolated(LagflowError):
    pass


class NotInvariant(LagflowError):
    pass


class Unbalanced(LagflowError):
    pass


class ParamsInfeasible(LagflowError):
    pass


class ConfigError(LagflowError):
    """Invalid scenario configuration; ``problems`` maps field names to diagnostics."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = dict(problems or {})
