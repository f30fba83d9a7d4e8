"""Direct-L2 projection filter on the normal-mixture family.

Each step projects the Stratonovich form of the conditional-density
evolution onto the tangent space of the mixture chart.  All inner products
reduce to closed-form ring integrals; the resulting parameter SDE is
advanced with the Stratonovich-Heun predictor-corrector.  The metric solve
is done against the Gram matrix directly (never through its inverse), and a
near-singular Gram matrix marks the boundary of the family: the run is
halted, not repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from . import gauss_ring, mixture
from .errors import NonFinite, NonIntegrable, SingularMetric
from .gauss_ring import RingFunction, constant, inner_product
from .mixture import MixtureParams

COND_LIMIT = 1e12
_PIVOT_FLOOR = 1e-13


@dataclass(frozen=True, eq=False)
class ProjectedCoefficients:
    """Gram matrix and projected drift/diffusion at one chart point."""

    h: np.ndarray          # (m, m) Gram matrix <v_i, v_j>
    drift: np.ndarray      # (m,)  solves h . drift = A - B
    diffusion: np.ndarray  # (m,)  solves h . diffusion = C (one observation channel)
    cond: float            # 2-norm condition estimate of h


@dataclass(frozen=True)
class FilterRunState:
    """Mixture point plus run bookkeeping; failure is recorded, not raised."""

    params: MixtureParams
    t: float
    failed_at: Optional[float] = None
    metric_cond: float = field(default=float("nan"))

    @property
    def failed(self) -> bool:
        return self.failed_at is not None


def gamma0(p: RingFunction, b: RingFunction) -> RingFunction:
    """(1/2) (b^2 - E_p[b^2]) p — the Stratonovich dt correction numerator."""
    b2 = b * b
    expect = (b2 * p).integrate()
    return ((b2 + constant(-expect)) * p).scale(0.5)


def gamma_k(p: RingFunction, b: RingFunction) -> RingFunction:
    """(b - E_p[b]) p — the observation-channel coefficient."""
    expect = (b * p).integrate()
    return (b + constant(-expect)) * p


def solve_metric(h: np.ndarray, rhs: np.ndarray):
    """Solve h x = rhs for an SPD Gram matrix; raise SingularMetric otherwise.

    Failure criteria: condition estimate above COND_LIMIT, a Cholesky pivot
    below _PIVOT_FLOOR times the largest diagonal entry, or a factorization
    breakdown that the symmetric-indefinite fallback cannot rescue.
    """
    cond = float(np.linalg.cond(h))
    if not math.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMetric(f"metric condition {cond:.3e}", cond=cond)
    try:
        cf = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
        pivots = np.diag(cf[0]) ** 2
        if pivots.min() < _PIVOT_FLOOR * np.diag(h).max():
            raise SingularMetric(
                f"metric pivot {pivots.min():.3e} below floor", cond=cond)
        x = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        try:
            x = scipy.linalg.solve(h, rhs, assume_a="sym")
        except scipy.linalg.LinAlgError as exc:
            raise SingularMetric(f"metric solve failed: {exc}", cond=cond)
    if not np.isfinite(x).all():
        raise SingularMetric("non-finite metric solution", cond=cond)
    return x, cond


def _concat_terms(rings):
    """Concatenate term arrays of several ring elements, with segment sizes."""
    sizes = np.array([r.n.size for r in rings])
    return ((np.concatenate([r.sign for r in rings]),
             np.concatenate([r.n for r in rings]),
             np.concatenate([r.a for r in rings]),
             np.concatenate([r.b for r in rings]),
             np.concatenate([r.c for r in rings])), sizes)


def _pair_with(single, cat):
    """Raw product terms of one ring element with a concatenated batch."""
    sg, n, a, b, c = cat
    return (np.multiply.outer(single.sign, sg).ravel(),
            np.add.outer(single.n, n).ravel(),
            np.add.outer(single.a, a).ravel(),
            np.add.outer(single.b, b).ravel(),
            np.add.outer(single.c, c).ravel())


def _segment_sums(vals, repeat, sizes):
    """Sum flat per-term values into len(sizes) segments.

    The flat layout is (single_terms, batch_terms) from _pair_with: each of
    the `repeat` rows spans all batch terms in segment order.
    """
    idx = np.tile(np.repeat(np.arange(sizes.size), sizes), repeat)
    return np.bincount(idx, weights=vals, minlength=sizes.size)


def assemble_coefficients(params: MixtureParams, scenario) -> ProjectedCoefficients:
    """Gram matrix and projected SDE coefficients at a chart point.

    A_j = <p, L v_j> (generator moved onto the tangent vector by adjointness),
    B_j = <gamma0(p), v_j>, C_j = <gamma1(p), v_j>; drift and diffusion solve
    h.drift = A - B and h.diffusion = C.  All inner products are evaluated in
    a few batched closed-form integrations over concatenated term arrays.
    """
    p = mixture.density(params)
    vs = mixture.tangent_vectors(params)
    m = len(vs)
    if any(v.is_zero for v in vs):
        raise SingularMetric("a tangent direction vanished (weight underflow)")
    b = scenario.b_ring
    b2 = scenario.b2_ring
    f_ring = scenario.f_ring
    a_ring = scenario.a_ring

    # Gram matrix from one outer product over all tangent terms
    vcat, vsizes = _concat_terms(vs)
    tsign, tn, ta, tb, tc = vcat
    total = tn.size
    pair_vals = gauss_ring._term_values(
        np.multiply.outer(tsign, tsign).ravel(),
        np.add.outer(tn, tn).ravel(),
        np.add.outer(ta, ta).ravel(),
        np.add.outer(tb, tb).ravel(),
        np.add.outer(tc, tc).ravel()).reshape(total, total)
    starts = np.concatenate([[0], np.cumsum(vsizes)[:-1]])
    h = np.add.reduceat(np.add.reduceat(pair_vals, starts, axis=0),
                        starts, axis=1)
    h = 0.5 * (h + h.T)  # symmetrize roundoff

    # <p, v_j> and the centered-expectation constants
    pv = _segment_sums(gauss_ring._term_values(*_pair_with(p, vcat)),
                       p.n.size, vsizes)
    e_b = inner_product(b, p)
    e_b2 = inner_product(b2, p)

    # generator part: <p, f v_j' + (1/2) a v_j''>
    dvs = [RingFunction(*gauss_ring._diff_arrays(v.sign, v.n, v.a, v.b, v.c))
           for v in vs]
    ddvs = [RingFunction(*gauss_ring._diff_arrays(dv.sign, dv.n, dv.a,
                                                  dv.b, dv.c))
            for dv in dvs]
    gen = np.zeros(m)
    if not f_ring.is_zero:
        fp = f_ring * p
        dcat, dsizes = _concat_terms(dvs)
        gen += _segment_sums(gauss_ring._term_values(*_pair_with(fp, dcat)),
                             fp.n.size, dsizes)
    if not a_ring.is_zero:
        ap = (0.5 * a_ring) * p
        ddcat, ddsizes = _concat_terms(ddvs)
        gen += _segment_sums(gauss_ring._term_values(*_pair_with(ap, ddcat)),
                             ap.n.size, ddsizes)

    # correction and observation parts via b p v_j and b^2 p v_j
    bp = b * p
    b2p = b2 * p
    bpv = _segment_sums(gauss_ring._term_values(*_pair_with(bp, vcat)),
                        bp.n.size, vsizes)
    b2pv = _segment_sums(gauss_ring._term_values(*_pair_with(b2p, vcat)),
                         b2p.n.size, vsizes)

    rhs = np.empty((m, 2))
    rhs[:, 0] = gen - 0.5 * (b2pv - e_b2 * pv)
    rhs[:, 1] = bpv - e_b * pv

    sol, cond = solve_metric(h, rhs)
    return ProjectedCoefficients(h=h, drift=sol[:, 0], diffusion=sol[:, 1],
                                 cond=cond)


def heun_step(state: FilterRunState, dt: float, dy: float,
              scenario) -> FilterRunState:
    """One Stratonovich-Heun step: Euler predictor, averaged corrector.

    Any SingularMetric / NonFinite / NonIntegrable raised at either stage
    fails the whole step; the returned state carries failed_at = state.t and
    the run halts there.
    """
    if state.failed:
        raise ValueError("cannot step a failed filter state")
    cond = state.metric_cond
    try:
        c0 = assemble_coefficients(state.params, scenario)
        cond = c0.cond
        predictor = mixture.update_point(
            state.params, c0.drift * dt + c0.diffusion * dy)
        c1 = assemble_coefficients(predictor, scenario)
        cond = max(c0.cond, c1.cond)
        corrected = mixture.update_point(
            state.params,
            0.5 * (c0.drift + c1.drift) * dt
            + 0.5 * (c0.diffusion + c1.diffusion) * dy)
        corrected = mixture.finalize_point(corrected)
    except SingularMetric as exc:
        return replace(state, failed_at=state.t,
                       metric_cond=max(exc.cond, 0.0))
    except (NonFinite, NonIntegrable):
        return replace(state, failed_at=state.t, metric_cond=cond)
    return FilterRunState(params=corrected, t=state.t + dt,
                          metric_cond=cond)


@dataclass
class L2NMRunResult:
    """Trajectory of a mixture-projection run over an observation record.

    metric_cond[i] is the condition estimate recorded while attempting step
    i, so on failure it is one entry longer than the surviving path and its
    last entry is the condition that triggered the halt.
    """

    params_path: list      # MixtureParams at each time (truncated at failure)
    times: np.ndarray
    metric_cond: np.ndarray
    failed_at: Optional[float] = None

    @property
    def failed(self) -> bool:
        return self.failed_at is not None


def run(scenario, record, init_params: MixtureParams) -> L2NMRunResult:
    """Advance the filter over a full observation record.

    Stepping stops at the first failed step; everything computed up to the
    failure time is returned.
    """
    dt = scenario.dt
    state = FilterRunState(params=init_params, t=0.0)
    path = [init_params]
    step_conds = []
    for dy in record.dy:
        state = heun_step(state, dt, float(dy), scenario)
        step_conds.append(state.metric_cond)
        if state.failed:
            break
        path.append(state.params)
    return L2NMRunResult(params_path=path, times=record.times[:len(path)],
                         metric_cond=np.asarray(step_conds),
                         failed_at=state.failed_at)
