"""Exception types shared across the package."""


class GridoptError(Exception):
    """Base class for all gridopt errors."""


class DisconnectedNetworkError(GridoptError):
    """The conductance support does not connect the loaded nodes.

    Raised when the regularized conductance system cannot be factored, or
    its estimated condition number exceeds the guard threshold. Callers that
    evaluate candidate structures may treat this as an infinite loss.
    """


class NumericalSingularityError(GridoptError):
    """Newton system could not be solved even after Levenberg damping."""


class ScenarioValidationError(GridoptError):
    """A scenario file violates the schema or a model invariant."""


class InfeasibleRobustnessError(GridoptError):
    """The candidate topology cannot survive the requested failure count."""
