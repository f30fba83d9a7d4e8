"""Residual metrics: L2, Hellinger, Levy distance, and the particle bound.

The Levy distance between cumulative distribution functions is the side of
the largest axis-parallel square that fits between their completed graphs:

    d_L(F, G) = inf { eps : F(x - eps) - eps <= G(x) <= F(x + eps) + eps }.

Working with step CDFs, both bounds are piecewise constant, so feasibility
of a candidate eps is decidable by scanning the points where either side
changes; the infimum is then located by bisection.  This gives the same
answer as the quadratic-cost brute-force square search, to within the grid
pitch that limits the accuracy of any step-function representation.

minN/minEpsilon quantify the best possible n-particle (Dirac mixture)
approximation of a CDF in the Levy sense: a greedy sweep adds steps as late
as possible and as high as possible, which is optimal for this band
problem, and a bisection over eps turns the count into the best achievable
tolerance for a given particle budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .reference import GridDensity

_BISECT_DEPTH = 40
_BAND_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class StepCDF:
    """Right-continuous step CDF; 0 left of the support, 1 from the last x on."""

    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xs", np.asarray(self.xs, float))
        object.__setattr__(self, "values",
                           np.clip(np.asarray(self.values, float), 0.0, 1.0))
        if self.xs.ndim != 1 or self.xs.shape != self.values.shape:
            raise ValueError("xs and values must be matching 1-d arrays")
        if np.any(np.diff(self.values) < -1e-12):
            raise ValueError("CDF values must be nondecreasing")

    @classmethod
    def from_grid_density(cls, g: GridDensity) -> "StepCDF":
        panels = 0.5 * (g.values[1:] + g.values[:-1]) * np.diff(g.xs)
        cum = np.concatenate([[0.0], np.cumsum(panels)])
        return cls(xs=g.xs, values=np.clip(cum, 0.0, 1.0))

    @classmethod
    def from_particles(cls, locations, masses) -> "StepCDF":
        locations = np.asarray(locations, float)
        masses = np.asarray(masses, float)
        order = np.argsort(locations)
        return cls(xs=locations[order], values=np.cumsum(masses[order]))

    @property
    def pitch(self) -> float:
        gaps = np.diff(self.xs)
        gaps = gaps[gaps > 0]
        return float(gaps.min()) if gaps.size else 1.0

    def evaluate(self, x):
        """Right-continuous evaluation, 0/1 outside the tabulated range."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.xs, x, side="right") - 1
        vals = np.where(idx < 0, 0.0, self.values[np.clip(idx, 0, None)])
        return np.where(x >= self.xs[-1], 1.0, vals)


def l2_residual(p_exact: GridDensity, p_approx: GridDensity) -> float:
    """Trapezoid estimate of the L2 distance between two grid densities."""
    p_exact.check_same_grid(p_approx)
    diff = p_exact.values - p_approx.values
    return math.sqrt(float(np.trapezoid(diff * diff, p_exact.xs)))


def hellinger_residual(p_exact: GridDensity, p_approx: GridDensity) -> float:
    """Hellinger distance between grid densities; bounded by sqrt(2)."""
    p_exact.check_same_grid(p_approx)
    diff = (np.sqrt(np.clip(p_exact.values, 0.0, None))
            - np.sqrt(np.clip(p_approx.values, 0.0, None)))
    return math.sqrt(float(np.trapezoid(diff * diff, p_exact.xs)))


def _levy_feasible(f: StepCDF, g: StepCDF, eps: float) -> bool:
    """Check F(x-eps)-eps <= G(x) <= F(x+eps)+eps at every change point."""
    # lower bound tightens exactly where F's shifted graph steps up
    at = f.xs + eps
    if np.any(g.evaluate(at) < np.minimum(f.values, 1.0) - eps - _BAND_SLACK):
        return False
    # F jumps to 1 at its last x
    if g.evaluate(f.xs[-1] + eps) < 1.0 - eps - _BAND_SLACK:
        return False
    # upper bound is tested where G steps up
    hi = f.evaluate(g.xs + eps) + eps
    if np.any(np.minimum(g.values, 1.0) > hi + _BAND_SLACK):
        return False
    if 1.0 > f.evaluate(g.xs[-1] + eps) + eps + _BAND_SLACK:
        return False
    return True


def levy_distance(f: StepCDF, g: StepCDF) -> float:
    """Levy distance between step CDFs by bisection on the band width."""
    lo, hi = 0.0, 1.0
    if _levy_feasible(f, g, lo):
        return 0.0
    for _ in range(_BISECT_DEPTH):
        mid = 0.5 * (lo + hi)
        if _levy_feasible(f, g, mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_particles(f: StepCDF, eps: float, cap: int | None = None) -> int:
    """Minimum number of Dirac masses whose CDF stays within the Levy band.

    Greedy sweep: hold the current level until the lower band is about to
    overtake it, then step exactly there, jumping as high as the upper band
    (capped at 1) allows.  One final step raises the function to 1 if the
    sweep ends below it.  Early-exits once the count exceeds cap.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    # lower band changes at f.xs + eps with values f.values - eps (then 1-eps)
    lo_x = np.append(f.xs + eps, f.xs[-1] + eps)
    lo_v = np.append(np.minimum(f.values, 1.0), 1.0) - eps

    level = 0.0
    count = 0
    for x, needed in zip(lo_x, lo_v):
        if needed > level + _BAND_SLACK:
            # upper band at the step location
            allowed = min(float(f.evaluate(x + eps)) + eps, 1.0)
            level = allowed
            count += 1
            if cap is not None and count > cap:
                return count
            if level >= 1.0 - _BAND_SLACK:
                break
    if level < 1.0 - _BAND_SLACK:
        count += 1
    return count


def min_epsilon(f: StepCDF, n: int, *, pitch: float | None = None) -> float:
    """Best achievable Levy tolerance with an n-particle approximation.

    Bisection over eps with min_particles as the feasibility oracle, to a
    tolerance of one grid pitch.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    tol = pitch if pitch is not None else f.pitch
    lo, hi = 0.0, 1.0
    if min_particles(f, 1.0, cap=n) > n:
        return 1.0
    for _ in range(_BISECT_DEPTH):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0:
            break
        if min_particles(f, mid, cap=n) <= n:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return hi
