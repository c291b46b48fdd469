"""Exception types shared across the package."""


class NuegError(Exception):
    """Base class for package errors."""


class ValidationError(NuegError):
    """An input object violates one of its invariants."""


class InfeasibleProblem(NuegError):
    """The requested marginal cannot be realized by any admissible plan."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class BudgetExceeded(NuegError):
    """Configuration enumeration would exceed the allowed budget."""

    def __init__(self, required, budget):
        super().__init__(
            f"enumeration needs {required} configurations, budget is {budget}"
        )
        self.required = required
        self.budget = budget


class GridTooCoarse(NuegError):
    """A grid-based evaluation was refused because the grid cannot resolve the
    requested length scale."""


class SolverFailure(NuegError):
    """An optimizer terminated abnormally."""
