"""Exception types shared across the filtering library."""


class FilterError(Exception):
    """Base class for all library-specific failures."""


class NonIntegrable(FilterError):
    """A ring element has a term with non-negative quadratic exponent."""


class DegreeLimit(FilterError):
    """Monomial degree exceeds the supported binomial-expansion cap."""


class NonFinite(FilterError):
    """A parameter update or state contains NaN or infinity."""


class SingularMetric(FilterError):
    """The metric (Gram/Fisher) matrix is numerically singular.

    Carries the condition estimate that triggered the failure so run
    loops can log it alongside the failure time.
    """

    def __init__(self, message: str, cond: float = float("inf")):
        super().__init__(message)
        self.cond = cond


class QuadratureFailure(FilterError):
    """Adaptive quadrature could not stabilize the requested integrals."""


class IntegrabilityLost(FilterError):
    """Leading natural parameter reached >= 0; the density no longer decays."""


class GridOverflow(FilterError):
    """Too much probability mass has reached the grid boundary."""


class GridMismatch(FilterError):
    """Two grid densities do not share the same x-grid."""


class OptimizationFailed(FilterError):
    """Prior matching did not reach the required fit quality."""
