"""Hellinger/Fisher projection filter on the polynomial exponential family.

Densities are p(x) = exp(theta_1 x + ... + theta_m x^m - psi(theta)) with m
even and theta_m < 0.  Projection under the Hellinger metric turns the
density evolution into an SDE for theta whose coefficients are moment
expressions:

    d theta = g^{-1} [ E[L x^j] - (1/2)(E[b^2 x^j] - E[b^2] eta_j) ] dt
            + g^{-1} [ E[b x^j] - E[b] eta_j ] dY

where g is the Fisher matrix of the family (covariance of the sufficient
statistics) and eta_j = E[x^j].  Unlike the mixture/L2 route there is no
closed form for these moments: they are evaluated by deterministic
composite Gauss-Legendre quadrature on an adaptively grown interval.

For an observation function inside the span of the sufficient statistics
the dY coefficient in natural coordinates is constant, so the
Euler-Maruyama update used here coincides with Milstein and no
Stratonovich correction is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import (IntegrabilityLost, NonFinite, QuadratureFailure,
                     SingularMetric)
from .l2nm import solve_metric

_R_START = 10.0
_R_GROW = 1.5
_R_MAX = 1.0e4
_TAIL_LOG = math.log(1e-16)
_PANEL_ORDER = 32
_MAX_DOUBLINGS = 6


@dataclass(frozen=True, eq=False)
class PolyExpParams:
    """Natural parameters (theta_1 ... theta_m); powers start at x^1."""

    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta",
                           np.atleast_1d(np.asarray(self.theta, float)))
        if self.theta.size % 2 != 0:
            raise ValueError("the family degree m must be even")

    @property
    def m(self) -> int:
        return self.theta.size

    def log_unnormalized(self, x):
        """Sum of theta_i x^i (no constant term)."""
        x = np.asarray(x, dtype=float)
        return x * np.polyval(self.theta[::-1], x)

    def density_on(self, x, psi: float):
        return np.exp(self.log_unnormalized(x) - psi)


@dataclass(frozen=True, eq=False)
class MomentResult:
    """Normalization and normalized moments of a polynomial exponential."""

    z: float            # unnormalized integral, exp(psi)
    psi: float          # log-normalizer
    eta: np.ndarray     # eta[n] = E[x^n], eta[0] = 1


@lru_cache(maxsize=64)
def _panel_nodes(r: float, n_panels: int):
    """Composite Gauss-Legendre nodes/weights on [-r, r]."""
    base_x, base_w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    edges = np.linspace(-r, r, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    weights = (half[:, None] * base_w[None, :]).ravel()
    return nodes, weights


def _raw_moments(params: PolyExpParams, max_order: int, r: float,
                 n_panels: int):
    """Moment integrals with the peak value factored out in log domain."""
    x, w = _panel_nodes(r, n_panels)
    ell = params.log_unnormalized(x)
    peak = ell.max()
    core = w * np.exp(ell - peak)
    powers = np.ones((max_order + 1, x.size))
    for n in range(1, max_order + 1):
        powers[n] = powers[n - 1] * x
    raw = powers @ core
    return raw, peak


def moments(params: PolyExpParams, max_order: int, *,
            rtol: float = 1e-10) -> MomentResult:
    """Normalization and moments E[x^n] for n <= max_order.

    The truncation radius starts at 10 and grows by factor 1.5 until the
    boundary integrand is below 1e-16 of the peak; the panel count doubles
    until the normalization and the highest-order moment are stable to rtol.
    """
    if params.theta[-1] >= 0.0:
        raise IntegrabilityLost("leading natural parameter must be negative")

    probe = np.linspace(-_R_START, _R_START, 201)
    r = _R_START
    while True:
        ell = params.log_unnormalized(probe)
        if not np.isfinite(ell).all():
            raise QuadratureFailure("non-finite log-density on probe grid")
        boundary = max(ell[0], ell[-1])
        if boundary < ell.max() + _TAIL_LOG:
            break
        r *= _R_GROW
        if r > _R_MAX:
            raise QuadratureFailure(f"truncation radius exceeded {_R_MAX}")
        probe = np.linspace(-r, r, 201)

    n_panels = max(16, int(math.ceil(r)))
    raw_prev, peak_prev = _raw_moments(params, max_order, r, n_panels)
    for _ in range(_MAX_DOUBLINGS):
        n_panels *= 2
        raw, peak = _raw_moments(params, max_order, r, n_panels)
        ref = np.exp(peak_prev - peak)
        err_z = abs(raw[0] - raw_prev[0] * ref) / abs(raw[0])
        err_hi = abs(raw[max_order] - raw_prev[max_order] * ref)
        scale_hi = abs(raw[max_order]) + abs(raw[0])
        if err_z < rtol and err_hi < rtol * scale_hi:
            break
        raw_prev, peak_prev = raw, peak
    else:
        raise QuadratureFailure("panel refinement did not stabilize")

    if raw[0] <= 0.0 or not np.isfinite(raw).all():
        raise QuadratureFailure("degenerate normalization integral")
    psi = peak + math.log(raw[0])
    eta = raw / raw[0]
    eta[0] = 1.0
    return MomentResult(z=math.exp(psi), psi=psi, eta=eta)


def fisher_matrix(params: PolyExpParams,
                  mom: Optional[MomentResult] = None) -> np.ndarray:
    """Fisher matrix g_ij = eta_{i+j} - eta_i eta_j for i, j in 1..m."""
    m = params.m
    if mom is None or mom.eta.size < 2 * m + 1:
        mom = moments(params, 2 * m)
    eta = mom.eta
    idx = np.arange(1, m + 1)
    g = eta[idx[:, None] + idx[None, :]] - np.outer(eta[idx], eta[idx])
    return g


def _poly_moment(coeffs, eta: np.ndarray, shift: int = 0) -> float:
    """E[poly(x) * x^shift] from the moment table; coeffs ascending."""
    return float(sum(ck * eta[k + shift] for k, ck in enumerate(coeffs)))


def step_coefficients(params: PolyExpParams, scenario,
                      mom: Optional[MomentResult] = None):
    """Drift and diffusion vectors of the natural-parameter SDE.

    Returns (drift, diffusion, cond, mom).  Requires constant sigma and
    polynomial f and b; the generator term is
    E[L x^j] = j E[f x^{j-1}] + (1/2) sigma^2 j (j-1) eta_{j-2}.
    """
    sigma_coeffs = np.asarray(scenario.sigma, float)
    if sigma_coeffs.size > 1 and np.any(sigma_coeffs[1:] != 0.0):
        raise ValueError(
            "the exponential-family filter requires constant sigma")
    sigma2 = float(sigma_coeffs[0]) ** 2

    m = params.m
    f = np.asarray(scenario.f, float)
    b = np.asarray(scenario.b, float)
    b2 = np.polynomial.polynomial.polymul(b, b)
    need = max(2 * m, b2.size - 1 + m, b.size - 1 + m, f.size - 1 + m - 1)
    if mom is None or mom.eta.size < need + 1:
        mom = moments(params, need)
    eta = mom.eta

    g = fisher_matrix(params, mom)
    rhs = np.empty((m, 2))
    for j in range(1, m + 1):
        gen = j * _poly_moment(f, eta, shift=j - 1)
        if j >= 2:
            gen += 0.5 * sigma2 * j * (j - 1) * eta[j - 2]
        corr = 0.5 * (_poly_moment(b2, eta, shift=j)
                      - _poly_moment(b2, eta) * eta[j])
        rhs[j - 1, 0] = gen - corr
        rhs[j - 1, 1] = _poly_moment(b, eta, shift=j) - _poly_moment(b, eta) * eta[j]
    sol, cond = solve_metric(g, rhs)
    return sol[:, 0], sol[:, 1], cond, mom


def he_step(params: PolyExpParams, dt: float, dy: float,
            scenario) -> PolyExpParams:
    """One Euler-Maruyama step of the projected natural-parameter SDE."""
    drift, diffusion, _, _ = step_coefficients(params, scenario)
    theta = params.theta + drift * dt + diffusion * dy
    if not np.isfinite(theta).all():
        raise NonFinite("non-finite natural parameters after step")
    if theta[-1] >= 0.0:
        raise IntegrabilityLost(
            f"leading parameter reached {theta[-1]:.3e} >= 0")
    return PolyExpParams(theta=theta)


@dataclass
class HERunResult:
    """Trajectory of an exponential-family projection run."""

    thetas: list           # PolyExpParams at each surviving time
    psis: np.ndarray       # log-normalizers matching thetas
    means: np.ndarray
    variances: np.ndarray
    times: np.ndarray
    failed_at: Optional[float] = None

    @property
    def failed(self) -> bool:
        return self.failed_at is not None


def run(scenario, record, init_params: PolyExpParams) -> HERunResult:
    """Advance the filter over a full observation record, halting on failure."""
    dt = scenario.dt
    thetas = [init_params]
    psis, means, variances = [], [], []
    mom = moments(init_params, 2)
    psis.append(mom.psi)
    means.append(mom.eta[1])
    variances.append(mom.eta[2] - mom.eta[1] ** 2)
    failed_at = None
    t = 0.0
    for dy in record.dy:
        try:
            new = he_step(thetas[-1], dt, float(dy), scenario)
            mom = moments(new, 2)
        except (SingularMetric, IntegrabilityLost, QuadratureFailure,
                NonFinite):
            failed_at = t
            break
        thetas.append(new)
        psis.append(mom.psi)
        means.append(mom.eta[1])
        variances.append(mom.eta[2] - mom.eta[1] ** 2)
        t += dt
    n = len(thetas)
    return HERunResult(thetas=thetas, psis=np.asarray(psis),
                       means=np.asarray(means),
                       variances=np.asarray(variances),
                       times=record.times[:n], failed_at=failed_at)
