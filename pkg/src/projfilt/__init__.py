"""Projection filters for 1-d continuous-time nonlinear filtering.

Library layout:

- gauss_ring: exact arithmetic/integration on sums of x^n exp(ax^2+bx+c)
- mixture: the unconstrained normal-mixture chart and its tangent vectors
- l2nm: direct-L2 projection filter with Stratonovich-Heun stepping
- hellinger: Fisher/Hellinger projection on polynomial exponential families
- reference: finite-difference exact filter and extended Kalman filter
- scenario: problem definitions, path simulation, prior matching
- metrics: L2/Hellinger/Levy residuals and the best-particle bound
- report, plots, cli: the reproduction harness
"""

from .errors import (DegreeLimit, FilterError, GridMismatch, GridOverflow,
                     IntegrabilityLost, NonFinite, NonIntegrable,
                     OptimizationFailed, QuadratureFailure, SingularMetric)
from .gauss_ring import (RingFunction, backward_operator, constant,
                         from_polynomial, gaussian_density, monomial)
from .hellinger import PolyExpParams, fisher_matrix, he_step, moments
from .l2nm import (FilterRunState, ProjectedCoefficients,
                   assemble_coefficients, gamma0, gamma_k, heun_step)
from .metrics import (StepCDF, hellinger_residual, l2_residual, levy_distance,
                      min_epsilon, min_particles)
from .mixture import (MixtureDerived, MixtureParams, density, derive,
                      derive_inverse, finalize_point, tangent_vectors,
                      update_point)
from .reference import EKFState, GridDensity, ekf_step, exact_step
from .scenario import (GridSpec, ObservationRecord, Scenario,
                       builtin_scenarios, match_prior_gaussian,
                       match_prior_mixture, simulate)

__version__ = "0.1.0"

__all__ = [
    "DegreeLimit", "FilterError", "GridMismatch", "GridOverflow",
    "IntegrabilityLost", "NonFinite", "NonIntegrable", "OptimizationFailed",
    "QuadratureFailure", "SingularMetric",
    "RingFunction", "backward_operator", "constant", "from_polynomial",
    "gaussian_density", "monomial",
    "PolyExpParams", "fisher_matrix", "he_step", "moments",
    "FilterRunState", "ProjectedCoefficients", "assemble_coefficients",
    "gamma0", "gamma_k", "heun_step",
    "StepCDF", "hellinger_residual", "l2_residual", "levy_distance",
    "min_epsilon", "min_particles",
    "MixtureDerived", "MixtureParams", "density", "derive", "derive_inverse",
    "finalize_point", "tangent_vectors", "update_point",
    "EKFState", "GridDensity", "ekf_step", "exact_step",
    "GridSpec", "ObservationRecord", "Scenario", "builtin_scenarios",
    "match_prior_gaussian", "match_prior_mixture", "simulate",
    "__version__",
]
