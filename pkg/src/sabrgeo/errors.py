"""Exception types shared across the package."""


class GeometryError(Exception):
    """Base class for numerical-geometry failures."""


class DomainError(GeometryError):
    """A point or a path left the valid region of a metric."""


class DegenerateMetricError(GeometryError):
    """The metric matrix is singular or not positive definite."""


class DegenerateEndpointsError(GeometryError):
    """Two-point construction called with coincident endpoints."""


class ConvergenceError(GeometryError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


class QuadratureError(GeometryError):
    """A quadrature did not reach its tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class NoSolutionError(GeometryError):
    """A root-finding problem has no solution in the admissible range."""
