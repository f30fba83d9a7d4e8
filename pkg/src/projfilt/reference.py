"""Reference filters: finite-difference exact solver and extended Kalman.

The "exact" filter advances the conditional density on a uniform grid by
operator splitting: an implicit-Euler finite-difference step of the forward
(Fokker-Planck) operator, a pointwise multiplication by the observation
likelihood, then renormalization.  Implicit Euler is unconditionally stable
and keeps the density nonnegative for the step sizes used here.  The EKF is
the continuous-time Kalman-Bucy recursion with the problem linearized at
the current mean, discretized with the observation step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridMismatch, GridOverflow

_BOUNDARY_CELLS = 5
_BOUNDARY_MASS_FRACTION = 1e-3
_MIN_VARIANCE = 1e-12


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Density samples on a uniform x-grid."""

    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xs", np.asarray(self.xs, float))
        object.__setattr__(self, "values", np.asarray(self.values, float))
        if self.xs.shape != self.values.shape or self.xs.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal size")

    @classmethod
    def from_function(cls, fn, x_min: float, x_max: float,
                      n_points: int) -> "GridDensity":
        xs = np.linspace(x_min, x_max, n_points)
        vals = np.clip(np.asarray(fn(xs), float), 0.0, None)
        return cls(xs=xs, values=vals).normalized()

    @property
    def n_points(self) -> int:
        return self.xs.size

    @property
    def dx(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.xs))

    def normalized(self) -> "GridDensity":
        return GridDensity(xs=self.xs, values=self.values / self.mass())

    def mean_and_variance(self) -> tuple[float, float]:
        mean = float(np.trapezoid(self.xs * self.values, self.xs))
        second = float(np.trapezoid(self.xs**2 * self.values, self.xs))
        return mean, second - mean * mean

    def check_same_grid(self, other: "GridDensity") -> None:
        if (self.xs.size != other.xs.size
                or not np.array_equal(self.xs, other.xs)):
            raise GridMismatch("densities live on different grids")


@dataclass(frozen=True)
class EKFState:
    """Gaussian summary (mean, variance) used by the extended Kalman filter."""

    mean: float
    variance: float


def _implicit_matrix(scenario, xs: np.ndarray, dt: float) -> np.ndarray:
    """Banded (ab-form) matrix of I - dt * Lstar for solve_banded.

    Lstar p = -(f p)' + (1/2)(a p)'' with centered differences and Dirichlet
    zero ghost values outside the grid.
    """
    dx = xs[1] - xs[0]
    f = np.polynomial.polynomial.polyval(xs, np.asarray(scenario.f, float))
    sig = np.polynomial.polynomial.polyval(xs, np.asarray(scenario.sigma, float))
    a = sig * sig
    n = xs.size

    diag = 1.0 + dt * a / dx**2
    upper = np.zeros(n)
    lower = np.zeros(n)
    # row i couples p[i+1] with  -dt*(-f[i+1]/(2dx) + a[i+1]/(2dx^2))
    upper[1:] = dt * (f[1:] / (2 * dx) - a[1:] / (2 * dx**2))
    # row i couples p[i-1] with  -dt*(+f[i-1]/(2dx) + a[i-1]/(2dx^2))
    lower[:-1] = -dt * (f[:-1] / (2 * dx) + a[:-1] / (2 * dx**2))
    return np.vstack([upper, diag, lower])


def exact_step(g: GridDensity, dt: float, dy: float, scenario,
               banded=None) -> GridDensity:
    """One splitting step: implicit prediction, likelihood correction, renorm.

    Passing a precomputed banded matrix (from _implicit_matrix) avoids
    rebuilding it every step of a fixed-step run.
    """
    if banded is None:
        banded = _implicit_matrix(scenario, g.xs, dt)
    vals = solve_banded((1, 1), banded, g.values, check_finite=False)
    vals[0] = 0.0
    vals[-1] = 0.0

    b = np.polynomial.polynomial.polyval(g.xs, np.asarray(scenario.b, float))
    expo = b * dy - 0.5 * b * b * dt
    vals = vals * np.exp(expo - expo.max())  # constant factor drops in renorm

    vals = np.clip(vals, 0.0, None)
    out = GridDensity(xs=g.xs, values=vals).normalized()

    edge = _BOUNDARY_CELLS
    edge_mass = (np.trapezoid(out.values[:edge + 1], out.xs[:edge + 1])
                 + np.trapezoid(out.values[-edge - 1:], out.xs[-edge - 1:]))
    if edge_mass > _BOUNDARY_MASS_FRACTION:
        raise GridOverflow(
            f"{edge_mass:.2%} of mass within {edge} cells of the boundary")
    return out


def ekf_step(state: EKFState, dt: float, dy: float, scenario) -> EKFState:
    """Euler-discretized Kalman-Bucy step with linearization at the mean."""
    fc = np.asarray(scenario.f, float)
    bc = np.asarray(scenario.b, float)
    sc = np.asarray(scenario.sigma, float)
    m, p = state.mean, state.variance

    f_m = np.polynomial.polynomial.polyval(m, fc)
    df_m = np.polynomial.polynomial.polyval(m, np.polynomial.polynomial.polyder(fc)) \
        if fc.size > 1 else 0.0
    b_m = np.polynomial.polynomial.polyval(m, bc)
    db_m = np.polynomial.polynomial.polyval(m, np.polynomial.polynomial.polyder(bc)) \
        if bc.size > 1 else 0.0
    sig_m = np.polynomial.polynomial.polyval(m, sc)

    mean = m + f_m * dt + p * db_m * (dy - b_m * dt)
    var = p + (2.0 * df_m * p + sig_m**2 - p**2 * db_m**2) * dt
    return EKFState(mean=float(mean), variance=float(max(var, _MIN_VARIANCE)))
