"""Heat kernels: the hyperbolic kernel on H^{4n+1} and the circular Jacobi kernel.

The hyperbolic kernel needs (1/sinh x . d/dx)^{2n} applied to a Gaussian.
That operator is done symbolically on terms

    coeff * t^-p * x^a * cosh(x)^b * sinh(x)^s * exp(-x^2 / 2t)

with exact rational coefficients, so no numerical differentiation is involved.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math

import mpmath
import numpy as np

from .errors import DomainError, NegativeDensity
from .specfun import TRUNC_REL, TRUNC_RUN, jacobi_table

# below this distance the term sum cancels badly and is redone in mpmath;
# the cancellation worsens with n, so the cutoff grows with it
SMALL_X = 0.05
SMALL_X_DPS = 40


@dataclass(frozen=True)
class SinhOpTerm:
    coeff: Fraction
    t_inv_pow: int = 0
    x_pow: int = 0
    cosh_pow: int = 0
    sinh_pow: int = 0

    @property
    def key(self):
        return (self.t_inv_pow, self.x_pow, self.cosh_pow, self.sinh_pow)


def _merge(pairs):
    acc = {}
    for key, c in pairs:
        acc[key] = acc.get(key, Fraction(0)) + c
    return [SinhOpTerm(c, *key) for key, c in sorted(acc.items()) if c != 0]


def _apply_once(terms):
    out = []
    for tm in terms:
        p, a, b, s = tm.key
        c = tm.coeff
        if a:
            out.append(((p, a - 1, b, s - 1), c * a))
        if b:
            out.append(((p, a, b - 1, s), c * b))
        if s:
            out.append(((p, a, b + 1, s - 2), c * s))
        out.append(((p + 1, a + 1, b, s - 1), -c))
    return _merge(out)


def sinh_op_apply(terms, k: int):
    """Apply (1/sinh x . d/dx) k times to sum(terms) * exp(-x^2/2t)."""
    terms = _merge((tm.key, Fraction(tm.coeff)) for tm in terms)
    for _ in range(k):
        terms = _apply_once(terms)
    return terms


@lru_cache(maxsize=None)
def kernel_terms(n: int):
    return tuple(sinh_op_apply([SinhOpTerm(Fraction(1))], 2 * n))


def small_x_cutoff(n: int) -> float:
    return SMALL_X * 4.0 ** (n - 1)


def eval_terms(terms, t: float, x, cutoff: float = SMALL_X):
    """Sum of the term list at x (array), without the Gaussian factor."""
    x = np.asarray(x, dtype=float)
    ch, sh = np.cosh(x), np.sinh(x)
    total = np.zeros_like(x)
    for tm in terms:
        total = total + float(tm.coeff) * t ** (-tm.t_inv_pow) * x ** tm.x_pow \
            * ch ** tm.cosh_pow * sh ** tm.sinh_pow
    small = x < cutoff
    if np.any(small):
        idx = np.flatnonzero(small)
        flat = total.reshape(-1)
        xs = x.reshape(-1)
        for i in idx:
            flat[i] = _eval_terms_mp(terms, t, float(xs[i]))
    return total


def _eval_terms_mp(terms, t: float, x: float) -> float:
    with mpmath.workdps(SMALL_X_DPS):
        xm, tm_ = mpmath.mpf(x), mpmath.mpf(t)
        ch, sh = mpmath.cosh(xm), mpmath.sinh(xm)
        acc = mpmath.mpf(0)
        for tm in terms:
            c = mpmath.mpf(tm.coeff.numerator) / tm.coeff.denominator
            acc += c * tm_ ** (-tm.t_inv_pow) * xm ** tm.x_pow * ch ** tm.cosh_pow * sh ** tm.sinh_pow
        return float(acc)


def hyperbolic_prefactor(n: int, t: float) -> float:
    return math.exp(-2.0 * n * n * t) / ((2 * math.pi) ** (2 * n) * math.sqrt(2 * math.pi * t))


def hyperbolic_heat_kernel(n: int, t: float, x):
    """s_{t,4n+1}(cosh x): heat kernel of Laplacian/2 on H^{4n+1} at geodesic distance x."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise DomainError("geodesic distance must be positive")
    if t <= 0:
        raise DomainError("t must be positive")
    val = hyperbolic_prefactor(n, t) * eval_terms(kernel_terms(n), t, xa, small_x_cutoff(n)) * np.exp(-xa * xa / (2 * t))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class CircularKernelParams:
    """Circular Jacobi kernel parameters; j_max defaults to the truncation rule."""

    alpha: float
    beta: float
    t: float
    j_max: int | None = None

    def __post_init__(self):
        if self.alpha <= -1 or self.beta <= -1:
            raise DomainError("alpha and beta must exceed -1")
        if self.t <= 0:
            raise DomainError("t must be positive")
        if self.j_max is None:
            object.__setattr__(self, "j_max", circular_truncation(self.alpha, self.beta, self.t))

    @classmethod
    def for_projective(cls, n: int, mu: float, t: float) -> "CircularKernelParams":
        return cls(2 * n - 1.0, mu + 1.0, t)


def _log_coeff_bound(alpha, beta, t, j):
    """log of |coefficient_j| * max|P_j| on [-1, 1]."""
    ab1 = alpha + beta + 1
    lg = math.log(2 * j + ab1) - 2 * j * (j + ab1) * t \
        + math.lgamma(j + ab1) - math.lgamma(j + beta + 1)
    top = max(alpha, beta)
    # |P_j| <= (q+1)_j / j! with q = max(alpha, beta) >= -1/2
    lg += math.lgamma(j + max(top, -0.5) + 1) - math.lgamma(max(top, -0.5) + 1) - math.lgamma(j + 1)
    return lg


def circular_truncation(alpha: float, beta: float, t: float, max_terms: int = 2000) -> int:
    """Smallest j_max after which 3 successive term bounds drop below 1e-16 of the j=0 term."""
    ref = _log_coeff_bound(alpha, beta, t, 0)
    run = 0
    for j in range(1, max_terms):
        if _log_coeff_bound(alpha, beta, t, j) < ref + math.log(TRUNC_REL):
            run += 1
            if run == TRUNC_RUN:
                return j
        else:
            run = 0
    return max_terms


@lru_cache(maxsize=256)
def _circular_coeffs(alpha, beta, t, j_max):
    ab1 = alpha + beta + 1
    j = np.arange(j_max + 1)
    lg = np.array([math.lgamma(k + ab1) - math.lgamma(k + beta + 1) for k in j])
    c = (2 * j + ab1) * np.exp(lg - 2 * j * (j + ab1) * t)
    return c * 2.0 / math.gamma(alpha + 1)


def circular_jacobi_kernel(p: CircularKernelParams, r, clamp: bool = True):
    """Transition density from 0 to r (w.r.t. dr) of the circular Jacobi diffusion."""
    ra = np.asarray(r, dtype=float)
    if np.any((ra <= 0) | (ra >= math.pi / 2)):
        raise DomainError("r must lie in (0, pi/2)")
    coeffs = _circular_coeffs(p.alpha, p.beta, p.t, p.j_max)
    P = jacobi_table(p.j_max, p.alpha, p.beta, np.cos(2 * ra))
    series = np.tensordot(coeffs, P, axes=1)
    val = np.cos(ra) ** (2 * p.beta + 1) * np.sin(ra) ** (2 * p.alpha + 1) * series
    if clamp:
        if np.any(val < -1e-12):
            raise NegativeDensity(f"kernel value {float(np.min(val))} below -1e-12")
        val = np.maximum(val, 0.0)
    return float(val) if val.ndim == 0 else val
