"""Exact arithmetic on finite sums of signed Gaussian-exponential monomials.

Elements are finite sums of terms

    sign * x^n * exp(a*x^2 + b*x + c)

with integer n >= 0 and real a, b, c.  The set is closed under addition,
multiplication and differentiation, and every element with all a < 0 has a
closed-form integral over the real line, obtained by completing the square
and reducing to the moments

    u_m = integral of t^m exp(-t^2) dt,   u_0 = sqrt(pi), u_1 = 0,
    u_m = (m-1)/2 * u_{m-2}.

The magnitude coefficient is always kept as the log-domain entry c, never as
a raw multiplier exp(c): densities and tangent vectors routinely carry
coefficients whose direct representation would lose precision or underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeLimit, NonIntegrable

# Terms with coefficient magnitude exp(c) below this are dropped after every
# operation; keeps term lists bounded across long predictor-corrector runs.
_LOG_UNDERFLOW = math.log(1e-300)

# Opposite-sign like terms closer than this in c are kept separate instead of
# merged: the merged magnitude would need log of a near-zero difference.
_CANCEL_EPS = 1e-12

_DEGREE_CAP = 60

# u_m for m = 0..2*_DEGREE_CAP+4 (differentiation can push degrees up).
_U_TABLE = np.zeros(2 * _DEGREE_CAP + 5)
_U_TABLE[0] = math.sqrt(math.pi)
for _m in range(2, _U_TABLE.size):
    _U_TABLE[_m] = 0.5 * (_m - 1) * _U_TABLE[_m - 2]

# binomial table from exact integers; zero where k > n
_COMB_TABLE = np.zeros((_DEGREE_CAP + 1, _DEGREE_CAP + 1))
for _n in range(_DEGREE_CAP + 1):
    for _k in range(_n + 1):
        _COMB_TABLE[_n, _k] = float(math.comb(_n, _k))


def _term_values(sign, n, a, b, c) -> np.ndarray:
    """Vectorized per-term closed-form integrals of raw term arrays."""
    if n.size == 0:
        return np.zeros(0)
    if (a >= 0.0).any():
        raise NonIntegrable("integrate requires a < 0 in every term")
    nmax = int(n.max())
    if nmax > _DEGREE_CAP:
        raise DegreeLimit(f"monomial degree exceeds {_DEGREE_CAP}")

    alpha = -a
    mu = b / (2.0 * alpha)
    ks = np.arange(0, nmax + 1, 2)  # odd u_k vanish
    # (terms, ks): comb(n, k) * mu^(n-k) * alpha^(-k/2) * u_k; the comb table
    # is zero for k > n, which masks the clamped exponents
    expo = np.maximum(n[:, None] - ks[None, :], 0)
    s = (_COMB_TABLE[n[:, None], ks[None, :]]
         * mu[:, None] ** expo
         * alpha[:, None] ** (-0.5 * ks[None, :])
         * _U_TABLE[ks][None, :]).sum(axis=1)

    logpref = c + b * b / (4.0 * alpha) - 0.5 * np.log(alpha)
    vals = np.zeros(n.size)
    nz = s != 0.0
    if nz.any():
        with np.errstate(over="ignore"):
            vals[nz] = (sign[nz]
                        * np.copysign(np.exp(logpref[nz]
                                             + np.log(np.abs(s[nz]))), s[nz]))
    return vals


def _integrate_arrays(sign, n, a, b, c) -> float:
    """Compensated sum of the per-term integrals."""
    if n.size == 0:
        return 0.0
    return math.fsum(_term_values(sign, n, a, b, c).tolist())


def _diff_arrays(sign, n, a, b, c):
    """Raw (uncompacted) term arrays of the derivative."""
    parts = []
    pos = n > 0
    if pos.any():
        parts.append((sign[pos], n[pos] - 1, a[pos], b[pos],
                      c[pos] + np.log(n[pos])))
    anz = a != 0.0
    if anz.any():
        parts.append((sign[anz] * np.sign(a[anz]), n[anz] + 1, a[anz], b[anz],
                      c[anz] + np.log(np.abs(2.0 * a[anz]))))
    bnz = b != 0.0
    if bnz.any():
        parts.append((sign[bnz] * np.sign(b[bnz]), n[bnz], a[bnz], b[bnz],
                      c[bnz] + np.log(np.abs(b[bnz]))))
    if not parts:
        return (np.empty(0), np.empty(0, dtype=np.int64),
                np.empty(0), np.empty(0), np.empty(0))
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]).astype(np.int64),
            np.concatenate([p[2] for p in parts]),
            np.concatenate([p[3] for p in parts]),
            np.concatenate([p[4] for p in parts]))


def inner_product(f: "RingFunction", g: "RingFunction") -> float:
    """Integral of f*g without building the compacted product."""
    if f.is_zero or g.is_zero:
        return 0.0
    return _integrate_arrays(
        np.multiply.outer(f.sign, g.sign).ravel(),
        np.add.outer(f.n, g.n).ravel(),
        np.add.outer(f.a, g.a).ravel(),
        np.add.outer(f.b, g.b).ravel(),
        np.add.outer(f.c, g.c).ravel())


def inner_product3(f: "RingFunction", g: "RingFunction",
                   h: "RingFunction") -> float:
    """Integral of f*g*h without building intermediate products."""
    if f.is_zero or g.is_zero or h.is_zero:
        return 0.0

    def triple(x, y, z):
        return (x[:, None, None] + y[None, :, None] + z[None, None, :]).ravel()

    return _integrate_arrays(
        (f.sign[:, None, None] * g.sign[None, :, None]
         * h.sign[None, None, :]).ravel(),
        triple(f.n, g.n, h.n),
        triple(f.a, g.a, h.a),
        triple(f.b, g.b, h.b),
        triple(f.c, g.c, h.c))


def _compact(sign, n, a, b, c):
    """Merge like terms (identical n, a, b) and drop underflowed ones.

    Same-sign like terms always merge by log-domain addition.  Opposite-sign
    like terms merge via log1p(-exp(-dc)) unless they cancel exactly (both
    dropped) or nearly cancel (kept separate).
    """
    keep = np.isfinite(c) & (c >= _LOG_UNDERFLOW)
    if not keep.all():
        sign, n, a, b, c = sign[keep], n[keep], a[keep], b[keep], c[keep]
    if n.size <= 1:
        return sign, n, a, b, c

    order = np.lexsort((sign, b, a, n))
    sign, n, a, b, c = sign[order], n[order], a[order], b[order], c[order]
    dup = (n[1:] == n[:-1]) & (a[1:] == a[:-1]) & (b[1:] == b[:-1])
    if not dup.any():
        return sign, n, a, b, c

    out = []
    i = 0
    while i < n.size:
        j = i + 1
        while j < n.size and n[j] == n[i] and a[j] == a[i] and b[j] == b[i]:
            j += 1
        # split the (n, a, b) group by sign; within a sign merge is exact
        for sg in (-1.0, 1.0):
            cs = c[i:j][sign[i:j] == sg]
            if cs.size == 0:
                continue
            cmax = cs.max()
            out.append((sg, n[i], a[i], b[i],
                        cmax + math.log(np.exp(cs - cmax).sum())))
        # try to resolve an opposite-sign pair
        if len(out) >= 2 and out[-1][1:4] == out[-2][1:4] and out[-1][0] != out[-2][0]:
            neg, pos = out[-2], out[-1]
            dc = pos[4] - neg[4]
            if dc == 0.0:
                out.pop()
                out.pop()
            elif abs(dc) > _CANCEL_EPS:
                big, small = (pos, neg) if dc > 0 else (neg, pos)
                merged_c = big[4] + math.log1p(-math.exp(-abs(dc)))
                out.pop()
                out.pop()
                if merged_c >= _LOG_UNDERFLOW:
                    out.append((big[0], big[1], big[2], big[3], merged_c))
        i = j

    if not out:
        return (np.empty(0), np.empty(0, dtype=np.int64),
                np.empty(0), np.empty(0), np.empty(0))
    arr = np.array(out)
    return (arr[:, 0], arr[:, 1].astype(np.int64),
            arr[:, 2], arr[:, 3], arr[:, 4])


@dataclass(frozen=True, eq=False)
class RingFunction:
    """Immutable element of the Gaussian-exponential ring.

    The empty term list represents the zero function.  All operations are
    pure; instances can be freely shared between threads.
    """

    sign: np.ndarray = field(default_factory=lambda: np.empty(0))
    n: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    a: np.ndarray = field(default_factory=lambda: np.empty(0))
    b: np.ndarray = field(default_factory=lambda: np.empty(0))
    c: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def from_terms(cls, terms) -> "RingFunction":
        """Build from an iterable of (sign, n, a, b, c) tuples."""
        if not terms:
            return cls()
        arr = np.asarray(terms, dtype=float)
        return cls(*_compact(arr[:, 0], arr[:, 1].astype(np.int64),
                             arr[:, 2], arr[:, 3], arr[:, 4]))

    @property
    def n_terms(self) -> int:
        return self.n.size

    @property
    def is_zero(self) -> bool:
        return self.n.size == 0

    def __add__(self, other: "RingFunction") -> "RingFunction":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        return RingFunction(*_compact(
            np.concatenate([self.sign, other.sign]),
            np.concatenate([self.n, other.n]),
            np.concatenate([self.a, other.a]),
            np.concatenate([self.b, other.b]),
            np.concatenate([self.c, other.c])))

    def __sub__(self, other: "RingFunction") -> "RingFunction":
        return self + other.scale(-1.0)

    def __mul__(self, other):
        if isinstance(other, RingFunction):
            if self.is_zero or other.is_zero:
                return RingFunction()
            sign = np.multiply.outer(self.sign, other.sign).ravel()
            n = np.add.outer(self.n, other.n).ravel()
            a = np.add.outer(self.a, other.a).ravel()
            b = np.add.outer(self.b, other.b).ravel()
            c = np.add.outer(self.c, other.c).ravel()
            return RingFunction(*_compact(sign, n, a, b, c))
        return self.scale(float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "RingFunction":
        return self.scale(-1.0)

    def scale(self, s: float) -> "RingFunction":
        """Multiply by the scalar s; |s| folds into c, sign(s) into sign."""
        if s == 0.0 or self.is_zero:
            return RingFunction()
        return RingFunction(*_compact(self.sign * math.copysign(1.0, s),
                                      self.n, self.a, self.b,
                                      self.c + math.log(abs(s))))

    def differentiate(self) -> "RingFunction":
        """Exact derivative; each term maps to up to three terms."""
        if self.is_zero:
            return RingFunction()
        return RingFunction(*_compact(*_diff_arrays(
            self.sign, self.n, self.a, self.b, self.c)))

    def evaluate(self, x):
        """Evaluate at scalar or array x.

        The exponent n*log|x| + a*x^2 + b*x + c is assembled in log domain
        before the single exponentiation, so grid evaluation far in the
        tails neither overflows nor loses the sign structure.
        """
        x_arr = np.asarray(x, dtype=float)
        scalar = x_arr.ndim == 0
        xv = np.atleast_1d(x_arr)
        if self.is_zero:
            out = np.zeros_like(xv)
            return float(out[0]) if scalar else out

        expo = (self.a[:, None] * xv[None, :]**2
                + self.b[:, None] * xv[None, :] + self.c[:, None])
        nz = xv != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            logx = np.where(nz, np.log(np.abs(xv)), 0.0)
        expo = expo + self.n[:, None] * logx[None, :]
        # sign of x^n: negative only for odd n at negative x
        xsgn = np.where(xv < 0, -1.0, 1.0)
        term_sgn = np.where(self.n[:, None] % 2 == 1, xsgn[None, :], 1.0)
        with np.errstate(over="ignore"):
            vals = self.sign[:, None] * term_sgn * np.exp(expo)
        # x = 0: x^n is 0 for n > 0, 1 for n = 0
        if (~nz).any():
            zero_col = np.where(self.n[:, None] > 0, 0.0,
                                self.sign[:, None] * np.exp(self.c[:, None]))
            vals = np.where(nz[None, :], vals, zero_col)
        out = vals.sum(axis=0)
        return float(out[0]) if scalar else out

    __call__ = evaluate

    def integrate(self) -> float:
        """Closed-form integral over the real line.

        Requires every term to have a < 0.  Per term, complete the square,
        substitute t = sqrt(-a)(x - mu) with mu = b/(2*(-a)), expand
        (mu + t/sqrt(-a))^n binomially and reduce to the u_m moments.
        """
        return _integrate_arrays(self.sign, self.n, self.a, self.b, self.c)


def constant(s: float) -> RingFunction:
    """The constant function s (zero function for s = 0)."""
    if s == 0.0:
        return RingFunction()
    return RingFunction.from_terms(
        [(math.copysign(1.0, s), 0, 0.0, 0.0, math.log(abs(s)))])


def monomial(n: int, coeff: float = 1.0) -> RingFunction:
    """coeff * x^n."""
    if coeff == 0.0:
        return RingFunction()
    return RingFunction.from_terms(
        [(math.copysign(1.0, coeff), n, 0.0, 0.0, math.log(abs(coeff)))])


def from_polynomial(coeffs) -> RingFunction:
    """Polynomial with ascending coefficients [c0, c1, ...] as a ring element."""
    terms = [(math.copysign(1.0, ck), k, 0.0, 0.0, math.log(abs(ck)))
             for k, ck in enumerate(coeffs) if ck != 0.0]
    return RingFunction.from_terms(terms)


def gaussian_density(mean: float, sigma: float, weight: float = 1.0) -> RingFunction:
    """weight * N(mean, sigma^2) as a single ring term."""
    if weight == 0.0:
        return RingFunction()
    a = -1.0 / (2.0 * sigma * sigma)
    b = mean / (sigma * sigma)
    c = (math.log(abs(weight)) - mean * mean / (2.0 * sigma * sigma)
         - math.log(sigma * math.sqrt(2.0 * math.pi)))
    return RingFunction.from_terms([(math.copysign(1.0, weight), 0, a, b, c)])


def backward_operator(f_drift: RingFunction, a_diff: RingFunction,
                      v: RingFunction) -> RingFunction:
    """Generator of the signal diffusion: f*v' + (1/2)*a*v''."""
    dv = v.differentiate()
    return f_drift * dv + 0.5 * (a_diff * dv.differentiate())
