"""Special functions: gamma, Pochhammer, orthogonal polynomials, Bessel, 2F1.

Polynomials are evaluated by three-term recurrences. Log-gamma and K_2 are
thin wrappers around the standard library and scipy.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import DomainError, SeriesDivergence

TRUNC_REL = 1e-16
TRUNC_RUN = 3
K2_UNDERFLOW = 700.0


@dataclass(frozen=True)
class PolyEvalParams:
    max_degree: int = 500
    overflow_guard: float = 1e300

    def __post_init__(self):
        if self.max_degree < 0:
            raise DomainError("max_degree must be nonnegative")


def log_gamma(x: float) -> float:
    if x <= 0:
        raise DomainError(f"log_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def log_pochhammer(a: float, j: int):
    """Return (sign, log|(a)_j|); sign is 0 when the product vanishes."""
    sign, total = 1, 0.0
    for i in range(j):
        f = a + i
        if f == 0.0:
            return 0, -math.inf
        if f < 0:
            sign = -sign
        total += math.log(abs(f))
    return sign, total


def pochhammer(a: float, j: int, p: PolyEvalParams = PolyEvalParams()) -> float:
    if j < 0:
        raise DomainError("pochhammer needs j >= 0")
    out = 1.0
    for i in range(j):
        out *= a + i
        if abs(out) > p.overflow_guard:
            sign, lg = log_pochhammer(a, j)
            return sign * math.exp(lg) if lg < 709.0 else sign * math.inf
        if out == 0.0:
            return 0.0
    return out


def jacobi_table(j_max: int, a: float, b: float, x) -> np.ndarray:
    """All P_j^{(a,b)}(x) for j = 0..j_max; shape (j_max + 1,) + x.shape."""
    x = np.asarray(x, dtype=float)
    out = np.empty((j_max + 1,) + x.shape)
    out[0] = 1.0
    if j_max == 0:
        return out
    out[1] = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0)
    ab = a + b
    for j in range(1, j_max):
        c = 2 * j + ab
        a1 = 2.0 * (j + 1) * (j + ab + 1) * c
        a2 = (c + 1) * (a * a - b * b)
        a3 = (c + 1) * (c + 2) * c
        a4 = 2.0 * (j + a) * (j + b) * (c + 2)
        out[j + 1] = ((a2 + a3 * x) * out[j] - a4 * out[j - 1]) / a1
    return out


def jacobi_poly(j: int, a: float, b: float, x):
    if a <= -1 or b <= -1:
        raise DomainError("Jacobi parameters must exceed -1")
    val = jacobi_table(j, a, b, x)[j]
    return float(val) if np.ndim(val) == 0 else val


def hermite_table(j_max: int, x) -> np.ndarray:
    """Probabilists' Hermite He_0..He_{j_max} at x."""
    x = np.asarray(x, dtype=float)
    out = np.empty((j_max + 1,) + x.shape)
    out[0] = 1.0
    if j_max >= 1:
        out[1] = x
    for j in range(1, j_max):
        out[j + 1] = x * out[j] - j * out[j - 1]
    return out


def hermite_poly(j: int, x):
    val = hermite_table(j, x)[j]
    return float(val) if np.ndim(val) == 0 else val


def bessel_i_half(m: int, u: float) -> float:
    """I_{m-1/2}(u) from its power series."""
    if u <= 0:
        raise DomainError(f"bessel_i_half needs u > 0, got {u}")
    nu = m - 0.5
    half = 0.5 * u
    # log of the first term keeps large m from overflowing
    term = math.exp(nu * math.log(half) - math.lgamma(nu + 1.0))
    total = term
    run = 0
    j = 0
    while run < TRUNC_RUN:
        j += 1
        term *= half * half / (j * (j + nu))
        total += term
        # terms are positive; the rule only fires past the peak
        run = run + 1 if (term < TRUNC_REL * total and j > half) else 0
        if j > 100000:
            raise SeriesDivergence("bessel_i_half series did not settle")
    return total


def bessel_k2(v: float) -> float:
    if v <= 0:
        raise DomainError(f"bessel_k2 needs v > 0, got {v}")
    if v > K2_UNDERFLOW:
        return 0.0
    return float(special.kv(2, v))


def bessel_k2_scaled(v):
    """e^v K_2(v), vectorized; finite for large v."""
    return special.kve(2, v)


def gauss_2f1_terminating(neg_j: int, b: float, c: float, z: float) -> float:
    """Finite hypergeometric sum with first parameter -j."""
    if neg_j > 0 or int(neg_j) != neg_j:
        raise DomainError("first parameter must be a nonpositive integer")
    j = -int(neg_j)
    if c <= 0 and float(c).is_integer() and -c < j:
        raise DomainError(f"2F1 undefined for c = {c} with j = {j}")
    term, total = 1.0, 1.0
    for m in range(j):
        term *= (m - j) * (b + m) / ((c + m) * (m + 1)) * z
        total += term
    return total


def q2m_poly(m: int, v, t: float) -> float:
    """e^{|v|^2/2t} Laplacian^m e^{-|v|^2/2t} via products of even Hermite polynomials."""
    v = np.asarray(getattr(v, "as_array", lambda: v)(), dtype=float)
    if t <= 0:
        raise DomainError("t must be positive")
    s = math.sqrt(t)
    h = [hermite_table(2 * m, vi / s)[0::2] for vi in v]
    total = 0.0
    for j1 in range(m + 1):
        for j2 in range(m + 1 - j1):
            j3 = m - j1 - j2
            c = math.factorial(m) // (math.factorial(j1) * math.factorial(j2) * math.factorial(j3))
            total += c * h[0][j1] * h[1][j2] * h[2][j3]
    return total / t ** m


def q2m_radial_table(m_max: int, rho: float, t: float) -> np.ndarray:
    """Q_{2m}(v, t)/(m! 4^m t^{-m}) for |v| = rho, m = 0..m_max.

    Uses scaled Hermite values H_{2j}(x)/(j! 4^j), whose recurrence stays
    bounded, and the fact that Q depends on |v| only (v = (rho, 0, 0)).
    """
    x = rho / math.sqrt(t)
    hs = _scaled_even_hermite(m_max, x)
    h0 = _scaled_even_hermite(m_max, 0.0)
    # sum over j2 + j3 = k of the v = 0 factors
    c = np.convolve(h0, h0)[: m_max + 1]
    return np.convolve(hs, c)[: m_max + 1]


def _scaled_even_hermite(m_max: int, x: float) -> np.ndarray:
    """He_{2j}(x)/(j! 4^j) for j = 0..m_max."""
    kmax = 2 * m_max
    g = np.empty(kmax + 1)
    g[0] = 1.0
    if kmax >= 1:
        g[1] = x * _rho(0)
    # g_k = He_k / (Gamma(k/2 + 1) 2^k) keeps the recurrence coefficients bounded
    for k in range(1, kmax):
        g[k + 1] = x * _rho(k) * g[k] - k / (2.0 * (k + 1)) * g[k - 1]
    return g[0::2]


def _rho(k: int) -> float:
    return math.exp(math.lgamma(k / 2 + 1) - math.lgamma(k / 2 + 1.5)) / 2.0
