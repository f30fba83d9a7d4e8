"""Problem definitions, sample-path simulation and prior preparation.

A scenario fixes the signal drift f, diffusion sigma and observation
function b (all polynomials, ascending coefficients), the polynomial
exponential prior, the time grid, the evaluation grid and the random seed.
Signal paths use Euler-Maruyama with 10 substeps per observation interval;
observation increments accumulate the substep contributions so that every
filter in a comparison consumes the identical record.  Randomness comes
from numpy's default PCG64 generator, which is seed-stable across
platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import gauss_ring, hellinger, mixture
from .errors import OptimizationFailed
from .hellinger import PolyExpParams
from .mixture import MixtureParams
from .reference import EKFState, GridDensity

SUBSTEPS = 10


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the evaluation grid shared by the exact filter and metrics."""

    x_min: float = -6.0
    x_max: float = 6.0
    n_points: int = 1000

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)


@dataclass(frozen=True)
class Scenario:
    """A complete filtering problem; immutable and JSON-serializable."""

    name: str
    f: tuple                 # drift polynomial, ascending coefficients
    sigma: tuple             # diffusion polynomial
    b: tuple                 # observation polynomial
    prior: tuple             # natural parameters theta_1..theta_m of the prior
    horizon: float = 10.0
    n_steps: int = 5000
    seed: int = 1
    x0: float = 0.0
    grid: GridSpec = field(default_factory=GridSpec)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def f_ring(self):
        return gauss_ring.from_polynomial(self.f)

    @cached_property
    def a_ring(self):
        a = np.polynomial.polynomial.polymul(self.sigma, self.sigma)
        return gauss_ring.from_polynomial(a)

    @cached_property
    def b_ring(self):
        return gauss_ring.from_polynomial(self.b)

    @cached_property
    def b2_ring(self):
        return gauss_ring.from_polynomial(
            np.polynomial.polynomial.polymul(self.b, self.b))

    @cached_property
    def prior_params(self) -> PolyExpParams:
        return PolyExpParams(theta=np.asarray(self.prior, float))

    def validate(self) -> None:
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if len(self.prior) % 2 != 0 or self.prior[-1] >= 0:
            raise ValueError("prior must have even degree with negative "
                             "leading coefficient")
        sig = np.polynomial.polynomial.polyval(
            self.grid.xs, np.asarray(self.sigma, float))
        if np.any(sig <= 0.0):
            raise ValueError("sigma must be positive on the grid domain")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "f": list(self.f),
            "sigma": list(self.sigma),
            "b": list(self.b),
            "prior": list(self.prior),
            "horizon": self.horizon,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "x0": self.x0,
            "grid": {"x_min": self.grid.x_min, "x_max": self.grid.x_max,
                     "n_points": self.grid.n_points},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        grid = data.get("grid")
        spec = GridSpec(**grid) if grid else GridSpec()
        return cls(name=data.get("name", "custom"),
                   f=tuple(data["f"]), sigma=tuple(data["sigma"]),
                   b=tuple(data["b"]), prior=tuple(data["prior"]),
                   horizon=float(data.get("horizon", 10.0)),
                   n_steps=int(data.get("n_steps", 5000)),
                   seed=int(data.get("seed", 1)),
                   x0=float(data.get("x0", 0.0)), grid=spec)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


# Built-in problems.  Constants the source material leaves open (drift and
# observation gains, horizon, step count, seeds) are configuration defaults,
# recorded here rather than derived.
def builtin_scenarios() -> dict:
    return {
        "linear": Scenario(
            name="linear", f=(0.0, -0.5), sigma=(1.0,), b=(0.0, 1.0),
            prior=(0.0, -0.5)),
        "quadratic": Scenario(
            name="quadratic", f=(0.0,), sigma=(1.0,), b=(0.0, 0.0, 1.0),
            prior=(0.0, -1.0, 1.0, -0.25)),
        "cubic": Scenario(
            name="cubic", f=(0.0,), sigma=(1.0,), b=(0.0, 0.0, 0.0, 1.0),
            prior=(0.0, 0.5, 0.0, -0.25)),
        "general_cubic": Scenario(
            name="general_cubic", f=(0.0,), sigma=(1.0,), b=(0.0, -1.0, 0.0, 1.0),
            prior=(0.0, 0.5, 0.0, -0.25)),
    }


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    """Uniform time grid, observation increments, and the true signal path."""

    times: np.ndarray    # (n_steps + 1,)
    dy: np.ndarray       # (n_steps,)
    x_path: np.ndarray   # (n_steps + 1,) true state, for reporting only

    @property
    def n_steps(self) -> int:
        return self.dy.size


def simulate(scenario: Scenario, seed: Optional[int] = None) -> ObservationRecord:
    """Simulate the signal and observation increments for one scenario.

    Euler-Maruyama with SUBSTEPS substeps per observation interval; the
    increment over an interval sums the substep drift contributions (fsum)
    plus the observation-noise increment.  Y_0 = 0 and X_0 is the fixed
    scenario value, so the record is fully determined by the seed.
    """
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    n = scenario.n_steps
    dt = scenario.dt
    ddt = dt / SUBSTEPS
    sq = math.sqrt(ddt)
    fc = np.asarray(scenario.f, float)
    sc = np.asarray(scenario.sigma, float)
    bc = np.asarray(scenario.b, float)
    polyval = np.polynomial.polynomial.polyval

    signal_noise = rng.standard_normal((n, SUBSTEPS))
    obs_noise = rng.standard_normal((n, SUBSTEPS))

    x = scenario.x0
    x_path = np.empty(n + 1)
    x_path[0] = x
    dy = np.empty(n)
    for i in range(n):
        drift_terms = []
        dv = 0.0
        for j in range(SUBSTEPS):
            drift_terms.append(float(polyval(x, bc)) * ddt)
            dv += sq * obs_noise[i, j]
            x = (x + float(polyval(x, fc)) * ddt
                 + float(polyval(x, sc)) * sq * signal_noise[i, j])
        dy[i] = math.fsum(drift_terms) + dv
        x_path[i + 1] = x
    times = np.linspace(0.0, scenario.horizon, n + 1)
    return ObservationRecord(times=times, dy=dy, x_path=x_path)


def coarsen_record(record: ObservationRecord, factor: int) -> ObservationRecord:
    """Aggregate a record onto a coarser time grid (same underlying path)."""
    if record.n_steps % factor != 0:
        raise ValueError("factor must divide the number of steps")
    dy = record.dy.reshape(-1, factor).sum(axis=1)
    return ObservationRecord(times=record.times[::factor], dy=dy,
                             x_path=record.x_path[::factor])


@dataclass(frozen=True)
class MixtureFit:
    """Result of matching a mixture to the scenario prior."""

    params: MixtureParams
    distance: float          # achieved grid L2 distance
    prior_norm: float        # grid L2 norm of the prior density


def prior_grid_density(prior: PolyExpParams, grid: GridSpec) -> GridDensity:
    """The normalized prior sampled on the evaluation grid."""
    mom = hellinger.moments(prior, 0)
    return GridDensity(xs=grid.xs,
                       values=prior.density_on(grid.xs, mom.psi)).normalized()


def _start_points(prior_mean: float, prior_sd: float, k: int,
                  rng: np.random.Generator, n_starts: int) -> list[MixtureParams]:
    spreads = [0.0, 0.5, 1.0, 1.5, 0.75, 1.25, 0.25, 2.0]
    starts = []
    for idx in range(n_starts):
        c = spreads[idx % len(spreads)]
        if k == 1:
            means = np.array([prior_mean])
        else:
            means = np.linspace(prior_mean - c * prior_sd,
                                prior_mean + c * prior_sd, k)
        means = means + 0.05 * prior_sd * rng.standard_normal(k)
        # strictly increasing means keep the gap chart well defined
        means = np.sort(means) + 1e-3 * np.arange(k)
        sig = prior_sd * (0.7 if idx % 2 else 1.0) / math.sqrt(k)
        starts.append(mixture.derive_inverse(
            np.full(k, 1.0 / k), means, np.full(k, max(sig, 1e-3))))
    return starts


def match_prior_mixture(prior: PolyExpParams, k: int, *,
                        grid: GridSpec | None = None, n_starts: int = 8,
                        max_rel_distance: float = 0.2,
                        seed: int = 0) -> MixtureFit:
    """Fit a k-component mixture to the prior by grid-L2 gradient search.

    Multi-start L-BFGS-B with numerical gradients on the unconstrained
    chart; raises OptimizationFailed when the best distance is worse than
    max_rel_distance times the prior's L2 norm.
    """
    grid = grid or GridSpec()
    xs = grid.xs
    target = prior_grid_density(prior, grid).values
    prior_norm = math.sqrt(float(np.trapezoid(target**2, xs)))

    mom = hellinger.moments(prior, 2)
    prior_mean = float(mom.eta[1])
    prior_sd = math.sqrt(max(float(mom.eta[2] - mom.eta[1]**2), 1e-6))

    def objective(vec):
        params = MixtureParams.from_vector(k, vec)
        diff = mixture.density(params).evaluate(xs) - target
        return math.sqrt(float(np.trapezoid(diff * diff, xs)))

    rng = np.random.default_rng(seed)
    best_vec, best_val = None, math.inf
    for start in _start_points(prior_mean, prior_sd, k, rng, n_starts):
        res = minimize(objective, start.as_vector(), method="L-BFGS-B",
                       options={"maxiter": 300, "ftol": 1e-14, "gtol": 1e-10})
        if res.fun < best_val:
            best_vec, best_val = res.x, float(res.fun)

    if best_vec is None or best_val > max_rel_distance * prior_norm:
        raise OptimizationFailed(
            f"best mixture fit distance {best_val:.3e} exceeds "
            f"{max_rel_distance:.0%} of the prior norm {prior_norm:.3e}")
    return MixtureFit(params=MixtureParams.from_vector(k, best_vec),
                      distance=best_val, prior_norm=prior_norm)


def match_prior_gaussian(prior: PolyExpParams) -> EKFState:
    """Moment-matched Gaussian initialization for the EKF."""
    mom = hellinger.moments(prior, 2)
    return EKFState(mean=float(mom.eta[1]),
                    variance=float(mom.eta[2] - mom.eta[1]**2))
