"""Reproduction harness: run filters on one path and emit comparable outputs.

All requested filters consume the identical observation record.  The grid
filter doubles as the ground truth: residual series (L2 and Levy) are taken
against it, and the per-step particle bound minEpsilon(exact_t, ceil((m+1)/2))
uses the mixture-chart dimension m = 3k-1.  Reported Levy values are floored
at twice the grid pitch, the resolution limit of step-CDF comparisons.

Prior pairing: the exponential filter starts from the scenario prior
itself, the mixture filter from the best grid-L2 mixture fit of that prior,
the EKF from its moment-matched Gaussian, and the exact filter from the
same fitted mixture the L2NM filter uses.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import hellinger, l2nm, metrics, mixture, reference, scenario as scn
from .errors import FilterError
from .hellinger import PolyExpParams
from .mixture import MixtureParams
from .reference import EKFState, GridDensity
from .scenario import Scenario

FILTER_NAMES = ("l2nm", "he", "exact", "ekf")


@dataclass
class RunConfig:
    """Resolved harness configuration."""

    scenario: Scenario
    filters: tuple = FILTER_NAMES
    k: int = 2
    he_degree: int = 4
    slice_times: Optional[tuple] = None
    seed: Optional[int] = None
    render_plots: bool = True


def resolve_he_prior(prior: tuple, he_degree: int) -> PolyExpParams:
    """Embed the scenario prior in the requested exponential family degree.

    A strictly larger even degree pads with zeros and a tiny negative
    leading coefficient so the density stays integrable; a smaller degree
    cannot represent the prior and is rejected.
    """
    theta = list(prior)
    if he_degree < len(theta):
        raise ValueError(
            f"he_degree {he_degree} cannot represent a degree-{len(theta)} prior")
    if he_degree > len(theta):
        theta = theta + [0.0] * (he_degree - len(theta))
        theta[-1] = -1e-6
    return PolyExpParams(theta=np.asarray(theta))


class _L2NMDriver:
    name = "l2nm"

    def __init__(self, sc: Scenario, fit: scn.MixtureFit):
        self.sc = sc
        self.state = l2nm.FilterRunState(params=fit.params, t=0.0)
        self.prior_distance = fit.distance
        self.cond_history = []

    @property
    def failed_at(self):
        return self.state.failed_at

    def step(self, dy: float) -> bool:
        self.state = l2nm.heun_step(self.state, self.sc.dt, dy, self.sc)
        self.cond_history.append(self.state.metric_cond)
        return not self.state.failed

    def density(self, xs: np.ndarray) -> np.ndarray:
        return mixture.density(self.state.params).evaluate(xs)

    def mean_sd(self):
        m, v = mixture.mean_and_variance(self.state.params)
        return m, math.sqrt(max(v, 0.0))


class _HEDriver:
    name = "he"

    def __init__(self, sc: Scenario, theta0: PolyExpParams):
        self.sc = sc
        self.params = theta0
        self.mom = hellinger.moments(theta0, 2)
        self.failed_at = None
        self.t = 0.0

    def step(self, dy: float) -> bool:
        try:
            self.params = hellinger.he_step(self.params, self.sc.dt, dy, self.sc)
            self.mom = hellinger.moments(self.params, 2)
        except FilterError:
            self.failed_at = self.t
            return False
        self.t += self.sc.dt
        return True

    def density(self, xs: np.ndarray) -> np.ndarray:
        return self.params.density_on(xs, self.mom.psi)

    def mean_sd(self):
        m = float(self.mom.eta[1])
        v = float(self.mom.eta[2]) - m * m
        return m, math.sqrt(max(v, 0.0))


class _ExactDriver:
    name = "exact"

    def __init__(self, sc: Scenario, init: GridDensity):
        self.sc = sc
        self.grid = init
        self.banded = reference._implicit_matrix(sc, init.xs, sc.dt)
        self.failed_at = None
        self.t = 0.0

    def step(self, dy: float) -> bool:
        try:
            self.grid = reference.exact_step(self.grid, self.sc.dt, dy,
                                             self.sc, banded=self.banded)
        except FilterError:
            self.failed_at = self.t
            return False
        self.t += self.sc.dt
        return True

    def density(self, xs: np.ndarray) -> np.ndarray:
        return self.grid.values

    def mean_sd(self):
        m, v = self.grid.mean_and_variance()
        return m, math.sqrt(max(v, 0.0))


class _EKFDriver:
    name = "ekf"

    def __init__(self, sc: Scenario, init: EKFState):
        self.sc = sc
        self.state = init
        self.failed_at = None

    def step(self, dy: float) -> bool:
        self.state = reference.ekf_step(self.state, self.sc.dt, dy, self.sc)
        return True

    def density(self, xs: np.ndarray) -> np.ndarray:
        sd = math.sqrt(self.state.variance)
        z = (xs - self.state.mean) / sd
        return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))

    def mean_sd(self):
        return self.state.mean, math.sqrt(self.state.variance)


@dataclass
class RunReport:
    """Everything the harness computed for one path."""

    config: RunConfig
    record: scn.ObservationRecord
    times: np.ndarray
    tracks: dict                 # name -> {"mean": array, "sd": array}
    failures: dict               # name -> failed time or None
    l2: dict                     # name -> array (vs exact)
    levy: dict                   # name -> array (vs exact, floored)
    particle_bound: np.ndarray
    n_particles: int
    levy_floor: float
    slice_indices: np.ndarray
    slice_densities: dict        # name -> list of arrays (per slice)
    grid_xs: np.ndarray
    prior_fit_distance: Optional[float]
    l2nm_metric_cond: Optional[np.ndarray]

    def to_dict(self) -> dict:
        def arr(x):
            return [None if not math.isfinite(v) else v for v in np.asarray(x, float)]

        return {
            "scenario": self.config.scenario.to_dict(),
            "config": {
                "filters": list(self.config.filters),
                "k": self.config.k,
                "he_degree": self.config.he_degree,
                "seed": (self.config.scenario.seed if self.config.seed is None
                         else self.config.seed),
                "n_particles": self.n_particles,
                "levy_floor": self.levy_floor,
                "rng": "numpy PCG64 (default_rng)",
            },
            "times": arr(self.times),
            "true_state": arr(self.record.x_path),
            "filters": {
                name: {
                    "failed_at": self.failures.get(name),
                    "mean": arr(self.tracks[name]["mean"]),
                    "sd": arr(self.tracks[name]["sd"]),
                }
                for name in self.config.filters
            },
            "prior_fit_distance": self.prior_fit_distance,
            "residuals": {
                "l2": {k: arr(v) for k, v in self.l2.items()},
                "levy": {k: arr(v) for k, v in self.levy.items()},
                "particle_bound": arr(self.particle_bound),
            },
            "slices": {
                "times": arr(self.times[self.slice_indices]),
                "x": arr(self.grid_xs),
                "densities": {k: [arr(d) for d in v]
                              for k, v in self.slice_densities.items()},
            },
        }


def _slice_indices(times: np.ndarray, horizon: float,
                   slice_times: Optional[tuple]) -> np.ndarray:
    if slice_times is None:
        slice_times = tuple(horizon * (i + 1) / 10.0 for i in range(10))
    idx = [int(np.argmin(np.abs(times - t))) for t in slice_times]
    return np.unique(np.asarray(idx, dtype=int))


def run_report(config: RunConfig) -> RunReport:
    sc = config.scenario
    if config.seed is not None:
        sc = replace(sc, seed=config.seed)
        config = replace(config, scenario=sc)
    unknown = set(config.filters) - set(FILTER_NAMES)
    if unknown:
        raise ValueError(f"unknown filters: {sorted(unknown)}")
    sc.validate()

    record = scn.simulate(sc)
    xs = sc.grid.xs
    n = record.n_steps
    times = record.times

    drivers = {}
    fit = None
    if "l2nm" in config.filters or "exact" in config.filters:
        fit = scn.match_prior_mixture(sc.prior_params, config.k, grid=sc.grid)
    if "l2nm" in config.filters:
        drivers["l2nm"] = _L2NMDriver(sc, fit)
    if "he" in config.filters:
        drivers["he"] = _HEDriver(sc, resolve_he_prior(sc.prior, config.he_degree))
    if "exact" in config.filters:
        init = GridDensity(
            xs=xs, values=mixture.density(fit.params).evaluate(xs)).normalized()
        drivers["exact"] = _ExactDriver(sc, init)
    if "ekf" in config.filters:
        drivers["ekf"] = _EKFDriver(sc, scn.match_prior_gaussian(sc.prior_params))

    m_dim = 3 * config.k - 1
    n_particles = math.ceil((m_dim + 1) / 2)
    levy_floor = 2.0 * sc.grid.dx

    tracks = {name: {"mean": np.full(n + 1, np.nan),
                     "sd": np.full(n + 1, np.nan)} for name in drivers}
    l2_series = {name: np.full(n + 1, np.nan) for name in ("l2nm", "he", "ekf")
                 if name in drivers}
    levy_series = {name: np.full(n + 1, np.nan) for name in ("l2nm", "he")
                   if name in drivers}
    bound_series = np.full(n + 1, np.nan)
    slice_idx = _slice_indices(times, sc.horizon, config.slice_times)
    slice_densities = {name: [] for name in drivers}
    alive = {name: True for name in drivers}

    def observe(i: int):
        dens = {}
        for name, drv in drivers.items():
            if not alive[name]:
                continue
            tracks[name]["mean"][i], tracks[name]["sd"][i] = drv.mean_sd()
            dens[name] = drv.density(xs)
        exact_vals = dens.get("exact")
        if exact_vals is not None:
            exact_grid = GridDensity(xs=xs, values=exact_vals)
            exact_cdf = metrics.StepCDF.from_grid_density(exact_grid)
            for name in l2_series:
                if name in dens:
                    l2_series[name][i] = metrics.l2_residual(
                        exact_grid, GridDensity(xs=xs, values=dens[name]))
            for name in levy_series:
                if name in dens:
                    raw = metrics.levy_distance(
                        exact_cdf,
                        metrics.StepCDF.from_grid_density(
                            GridDensity(xs=xs, values=dens[name])))
                    levy_series[name][i] = max(raw, levy_floor)
            bound_series[i] = max(
                metrics.min_epsilon(exact_cdf, n_particles), levy_floor)
        if i in slice_idx:
            for name in drivers:
                slice_densities[name].append(
                    dens[name].copy() if name in dens
                    else np.full(xs.size, np.nan))

    observe(0)
    for i in range(n):
        dy = float(record.dy[i])
        for name, drv in drivers.items():
            if alive[name]:
                alive[name] = drv.step(dy)
        observe(i + 1)

    failures = {name: drv.failed_at for name, drv in drivers.items()}
    return RunReport(
        config=config, record=record, times=times, tracks=tracks,
        failures=failures, l2=l2_series, levy=levy_series,
        particle_bound=bound_series, n_particles=n_particles,
        levy_floor=levy_floor, slice_indices=slice_idx,
        slice_densities=slice_densities, grid_xs=xs,
        prior_fit_distance=None if fit is None else fit.distance,
        l2nm_metric_cond=(np.asarray(drivers["l2nm"].cond_history)
                          if "l2nm" in drivers else None))


def _fmt(x) -> str:
    """Shortest round-trip decimal; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if not math.isfinite(x):
        return ""
    return repr(x)


def write_outputs(rep: RunReport, out_dir) -> dict:
    """Write report.json, slices.csv, residuals.csv, tracks.csv; return paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["report"] = out / "report.json"
    with open(paths["report"], "w") as fh:
        json.dump(rep.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")

    def col(series_map, name, i):
        if name not in series_map:
            return None
        v = series_map[name][i]
        return None if not math.isfinite(v) else v

    paths["residuals"] = out / "residuals.csv"
    with open(paths["residuals"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "l2_l2nm", "l2_he", "l2_ekf",
                    "levy_l2nm", "levy_he", "levy_particle_bound"])
        for i, t in enumerate(rep.times):
            b = rep.particle_bound[i]
            w.writerow([_fmt(t),
                        _fmt(col(rep.l2, "l2nm", i)),
                        _fmt(col(rep.l2, "he", i)),
                        _fmt(col(rep.l2, "ekf", i)),
                        _fmt(col(rep.levy, "l2nm", i)),
                        _fmt(col(rep.levy, "he", i)),
                        _fmt(None if not math.isfinite(b) else b)])

    paths["tracks"] = out / "tracks.csv"
    with open(paths["tracks"], "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["t", "true_x"]
        for name in FILTER_NAMES:
            if name in rep.tracks:
                header += [f"mean_{name}", f"sd_{name}"]
        w.writerow(header)
        for i, t in enumerate(rep.times):
            row = [_fmt(t), _fmt(rep.record.x_path[i])]
            for name in FILTER_NAMES:
                if name in rep.tracks:
                    row += [_fmt(col({name: rep.tracks[name]["mean"]}, name, i)),
                            _fmt(col({name: rep.tracks[name]["sd"]}, name, i))]
            w.writerow(row)

    paths["slices"] = out / "slices.csv"
    with open(paths["slices"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "p_exact", "p_l2nm", "p_he", "p_ekf"])
        for si, idx in enumerate(rep.slice_indices):
            t = rep.times[idx]
            for xi, x in enumerate(rep.grid_xs):
                row = [_fmt(t), _fmt(x)]
                for name in ("exact", "l2nm", "he", "ekf"):
                    if name in rep.slice_densities:
                        v = rep.slice_densities[name][si][xi]
                        row.append(_fmt(None if not math.isfinite(v) else v))
                    else:
                        row.append("")
                w.writerow(row)

    return paths
