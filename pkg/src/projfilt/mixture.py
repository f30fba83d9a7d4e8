"""The k-component normal-mixture family as a statistical manifold.

The chart covers all of R^(3k-1): weights come from stick-breaking over
logits, means from a first mean plus exponentiated gaps, and standard
deviations from exponentiated log-sigmas.  Every point of the chart is a
valid mixture (ordered means, positive sigmas, weights in the open simplex),
so parameter updates never need constraint handling; degeneracy shows up
only as singularity of the metric, not as an invalid state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from . import gauss_ring
from .errors import NonFinite
from .gauss_ring import RingFunction


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Unconstrained coordinates (xi, x1, y, s) of a k-component mixture."""

    xi: np.ndarray     # (k-1,) weight logits
    x1: float          # first mean
    y: np.ndarray      # (k-1,) log mean-gaps for components 2..k
    s: np.ndarray      # (k,)   log standard deviations

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, float)))
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, float)))
        object.__setattr__(self, "s", np.atleast_1d(np.asarray(self.s, float)))
        if self.xi.size != self.s.size - 1 or self.y.size != self.s.size - 1:
            raise ValueError("inconsistent component counts in mixture coordinates")

    @property
    def k(self) -> int:
        return self.s.size

    @property
    def dim(self) -> int:
        return 3 * self.k - 1

    def as_vector(self) -> np.ndarray:
        """Coordinates in the fixed order (xi_1.., x1, y_2.., s_1..)."""
        return np.concatenate([self.xi, [self.x1], self.y, self.s])

    @classmethod
    def from_vector(cls, k: int, vec) -> "MixtureParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size != 3 * k - 1:
            raise ValueError(f"expected {3 * k - 1} coordinates for k={k}")
        return cls(xi=vec[:k - 1], x1=float(vec[k - 1]),
                   y=vec[k:2 * k - 1], s=vec[2 * k - 1:])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.as_vector()).all())


@dataclass(frozen=True, eq=False)
class MixtureDerived:
    """Weights, means and sigmas derived from a chart point."""

    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray


def derive(params: MixtureParams) -> MixtureDerived:
    """Map chart coordinates to (weights, means, sigmas)."""
    k = params.k
    weights = np.empty(k)
    remaining = 1.0
    for i in range(k - 1):
        weights[i] = expit(params.xi[i]) * remaining
        remaining -= weights[i]
    weights[k - 1] = remaining
    means = params.x1 + np.concatenate([[0.0], np.cumsum(np.exp(params.y))])
    return MixtureDerived(weights=weights, means=means, sigmas=np.exp(params.s))


def derive_inverse(weights, means, sigmas) -> MixtureParams:
    """Chart coordinates of a (weights, means, sigmas) triple.

    Components are sorted by mean first; the chart orders means ascending.
    """
    weights = np.asarray(weights, float)
    means = np.asarray(means, float)
    sigmas = np.asarray(sigmas, float)
    order = np.argsort(means)
    weights, means, sigmas = weights[order], means[order], sigmas[order]
    k = means.size
    xi = np.empty(k - 1)
    remaining = 1.0
    for i in range(k - 1):
        xi[i] = logit(weights[i] / remaining)
        remaining -= weights[i]
    gaps = np.diff(means)
    if (gaps <= 0).any():
        raise ValueError("means must be strictly increasing")
    return MixtureParams(xi=xi, x1=float(means[0]), y=np.log(gaps),
                         s=np.log(sigmas))


def density(params: MixtureParams) -> RingFunction:
    """Mixture density as a ring element, one Gaussian term per component."""
    d = derive(params)
    out = RingFunction()
    for lam, mu, sig in zip(d.weights, d.means, d.sigmas):
        out = out + gauss_ring.gaussian_density(mu, sig, lam)
    return out


def _weight_jacobian(xi: np.ndarray) -> np.ndarray:
    """d(weights)/d(xi), shape (k, k-1), from the stick-breaking recursion."""
    k = xi.size + 1
    jac = np.zeros((k, k - 1))
    remaining = 1.0
    d_remaining = np.zeros(k - 1)
    for i in range(k - 1):
        g = expit(xi[i])
        jac[i] = g * d_remaining
        jac[i, i] += g * (1.0 - g) * remaining
        remaining *= (1.0 - g)
        d_remaining = d_remaining - jac[i]
    jac[k - 1] = d_remaining
    return jac


def tangent_vectors(params: MixtureParams) -> list[RingFunction]:
    """Partial derivatives of the density in each of the 3k-1 coordinates.

    Assembled by the analytic chain rule through the chart, so every vector
    is itself a ring element (polynomial factors times the component
    Gaussians) and all downstream inner products stay in closed form.
    """
    d = derive(params)
    k = params.k

    unit = [gauss_ring.gaussian_density(mu, sig)
            for mu, sig in zip(d.means, d.sigmas)]
    # lambda_i * dphi_i/dmean_i  = lambda_i * phi_i * (x - mu)/sigma^2
    dmean = [gauss_ring.from_polynomial([-mu / sig**2, 1.0 / sig**2])
             * u.scale(lam)
             for lam, mu, sig, u in zip(d.weights, d.means, d.sigmas, unit)]
    # lambda_i * sigma_i * dphi_i/dsigma_i = lambda_i * phi_i * ((x-mu)^2/sigma^2 - 1)
    dlogsig = [gauss_ring.from_polynomial(
                   [mu**2 / sig**2 - 1.0, -2.0 * mu / sig**2, 1.0 / sig**2])
               * u.scale(lam)
               for lam, mu, sig, u in zip(d.weights, d.means, d.sigmas, unit)]

    vectors: list[RingFunction] = []
    wjac = _weight_jacobian(params.xi)
    for j in range(k - 1):
        v = RingFunction()
        for i in range(k):
            v = v + unit[i].scale(wjac[i, j])
        vectors.append(v)

    v = RingFunction()
    for i in range(k):
        v = v + dmean[i]
    vectors.append(v)

    for j in range(1, k):  # gap coordinate y_{j+1} moves means j..k-1
        v = RingFunction()
        for i in range(j, k):
            v = v + dmean[i]
        vectors.append(v.scale(math.exp(params.y[j - 1])))

    vectors.extend(dlogsig)
    return vectors


def update_point(params: MixtureParams, delta) -> MixtureParams:
    """Coordinate-wise addition of an increment in the fixed vector order."""
    delta = np.asarray(delta, dtype=float)
    if not np.isfinite(delta).all():
        raise NonFinite("non-finite parameter increment")
    return MixtureParams.from_vector(params.k, params.as_vector() + delta)


def finalize_point(params: MixtureParams) -> MixtureParams:
    """End-of-step hook: validates finiteness, otherwise a no-op.

    The chart normalizes weights by construction, so no renormalization is
    needed; the hook exists so a future chart change has a place to live.
    """
    if not params.is_finite():
        raise NonFinite("non-finite mixture parameters")
    return params


def mean_and_variance(params: MixtureParams) -> tuple[float, float]:
    """First two moments of the mixture, in closed form."""
    d = derive(params)
    mean = float(np.dot(d.weights, d.means))
    second = float(np.dot(d.weights, d.sigmas**2 + d.means**2))
    return mean, second - mean * mean
