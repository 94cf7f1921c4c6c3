"""Closed-form characteristic functions and densities of the area process.

Three geometries: flat quaternionic space, quaternionic hyperbolic space and
quaternionic projective space. All evaluators depend on lambda only through
|lambda|; mu = sqrt(|lambda|^2 + 1) - 1 in the curved cases.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
import math
import threading

import numpy as np

from . import kernels
from .errors import DegenerateResidue, DomainError, NegativeDensity, QuadratureFailure, SeriesDivergence
from .quadrature import QuadratureParams, gk21, NODES, WK, WG
from .quat import Su2Vector
from .specfun import TRUNC_REL, TRUNC_RUN, bessel_k2_scaled, q2m_radial_table


class Space(str, Enum):
    FLAT = "flat"
    HYPERBOLIC = "hyperbolic"
    PROJECTIVE = "projective"


def _as_vec(v) -> Su2Vector:
    if isinstance(v, Su2Vector):
        return v
    return Su2Vector.from_array(v)


@dataclass(frozen=True)
class CharFnQuery:
    space: Space
    n: int
    t: float
    lam: Su2Vector = Su2Vector()

    def __post_init__(self):
        object.__setattr__(self, "space", Space(self.space))
        object.__setattr__(self, "lam", _as_vec(self.lam))
        if self.n < 1:
            raise DomainError("n must be a positive integer")
        if not self.t > 0:
            raise DomainError("t must be positive")

    @property
    def lam_norm(self) -> float:
        return self.lam.norm()

    @property
    def mu(self) -> float:
        # sqrt(l^2+1) - 1 without cancellation for small l
        l2 = self.lam_norm ** 2
        return l2 / (math.sqrt(l2 + 1.0) + 1.0)


@dataclass(frozen=True)
class SeriesParams:
    rel_tol: float = TRUNC_REL
    run: int = TRUNC_RUN
    max_terms: int = 500


def _truncate(terms, p: SeriesParams):
    """Sum terms until |term| < rel_tol*|partial| holds `run` times in a row."""
    total, run = 0.0, 0
    for j, term in enumerate(terms):
        total += term
        run = run + 1 if abs(term) < p.rel_tol * abs(total) or term == 0.0 else 0
        if run >= p.run:
            return total, j + 1
        if j + 1 >= p.max_terms:
            break
    raise SeriesDivergence(f"series did not settle within {p.max_terms} terms")


# ----------------------------------------------------------------------------
# flat space

def flat_cf(q: CharFnQuery) -> float:
    x = abs(q.lam_norm * q.t / 2.0)
    # log cosh x = x + log1p(exp(-2x)) - log 2
    return math.exp(-2 * q.n * (x + math.log1p(math.exp(-2 * x)) - math.log(2.0)))


def flat_conditional_cf(q: CharFnQuery, r: float) -> float:
    """CF of the area given |B_t| = r (Yor's formula)."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    u = q.lam_norm * q.t / 2.0
    if u < 1e-6:
        ratio = 1.0 - u * u / 6.0
        ucoth_m1 = u * u / 3.0
    else:
        ratio = u / math.sinh(u)
        ucoth_m1 = u / math.tanh(u) - 1.0
    return ratio ** (2 * q.n) * math.exp(-r * r / (2 * q.t) * ucoth_m1)


def bessel_endpoint_density(r, n: int, t: float):
    """Density of |B_t| for a 4n-dimensional Brownian motion started at 0."""
    r = np.asarray(r, dtype=float)
    d = 4 * n
    logc = (d / 2 - 1) * math.log(2.0) + math.lgamma(d / 2) + (d / 2) * math.log(t)
    return np.exp((d - 1) * np.log(np.maximum(r, 1e-300)) - r * r / (2 * t) - logc)


FLAT_DENSITY_CONST = "2^(2n-1) / (4 pi^2 t^3)"


def flat_density_constant(n: int, t: float) -> float:
    return 2.0 ** (2 * n - 1) / (4 * math.pi ** 2 * t ** 3)


def flat_density(phi, t: float, n: int, p: QuadratureParams = QuadratureParams(abs_tol=1e-11)) -> float:
    """Density of the area at phi, from the (u, v) double integral.

    With s = ln(v/(1-v)) the v-weight [v(1-v)]^{n-1} dv becomes
    (2 cosh(s/2))^{-2n} ds and ln^2 becomes s^2; the integrand is even in
    both s and u, so both ranges are folded.
    """
    if not t > 0:
        raise DomainError("t must be positive")
    rho = _as_vec(phi).norm() if not np.isscalar(phi) else abs(float(phi))
    s_max = (40.0 + 2 * math.log(40.0)) / n + 4.0

    def inner(u):
        def f(s):
            ss = s[None, :]
            w = np.exp(-2 * n * (ss / 2 + np.log1p(np.exp(-ss)))) * ss * ss
            return w * np.cos(ss * u[:, None] * rho / t)
        val, _ = gk21(f, 0.0, s_max, p)
        return 2.0 * val

    val, err = gk21(inner, 0.0, 1.0, p)
    if err > 1e-8:
        raise QuadratureFailure(f"flat density at |phi|={rho}: error {err}")
    return flat_density_constant(n, t) * 2.0 * val


def flat_density_displayed(phi, t: float, n: int) -> float:
    """Same integral with the constant 2^(2n-1)/(2 pi t^3) as printed in the source formula."""
    return flat_density(phi, t, n) * (2.0 ** (2 * n - 1) / (2 * math.pi * t ** 3)) / flat_density_constant(n, t)


# ----------------------------------------------------------------------------
# hyperbolic space

HYP_TAIL_LOG = 70.0


def hyp_cf_constant(n: int) -> float:
    """Factor 4 pi^{2n} / Gamma(2n) multiplying the r,u double integral.

    It equals 2 |S^{4n-1}|; without it the integral at lambda = 0 is not 1.
    """
    return 4.0 * math.pi ** (2 * n) / math.gamma(2 * n)


class _HypWeights:
    """omega(u) = e^{u^2/2t} * int_0^inf sinh^{4n-1} r cosh^2 r s_t(cosh u cosh r) dr
    on Gauss-Kronrod nodes of a fixed lattice of u-panels, filled lazily."""

    def __init__(self, n: int, t: float, width: float):
        self.n, self.t, self.h = n, t, width
        self.vals: list[np.ndarray] = []
        self.lock = threading.Lock()
        self.r_max = (4 * n + 1) * t + math.sqrt((4 * n + 1) ** 2 * t * t + 2 * t * HYP_TAIL_LOG)
        if self.r_max > 300:
            raise QuadratureFailure("t too large for the hyperbolic kernel in double precision")

    def nodes(self, k0: int, k1: int) -> np.ndarray:
        mids = (np.arange(k0, k1) + 0.5) * self.h
        return (mids[:, None] + 0.5 * self.h * NODES[None, :]).ravel()

    def upto(self, npanels: int) -> np.ndarray:
        with self.lock:
            have = len(self.vals)
            if npanels > have:
                u = self.nodes(have, npanels)
                om = self._omega(u).reshape(npanels - have, 21)
                self.vals.extend(list(om))
            return np.array(self.vals[:npanels])

    def _omega(self, u):
        n, t = self.n, self.t
        terms = kernels.kernel_terms(n)
        cut = kernels.small_x_cutoff(n)
        lpre = math.log(kernels.hyperbolic_prefactor(n, t))

        def f(r):
            rr, uu = r[None, :], u[:, None]
            cm1 = 2 * np.sinh(uu / 2) ** 2 * np.cosh(rr) + 2 * np.sinh(rr / 2) ** 2
            x = 2 * np.arcsinh(np.sqrt(cm1 / 2))
            logw = (4 * n - 1) * np.log(np.sinh(rr)) + 2 * np.log(np.cosh(rr)) \
                - (x - uu) * (x + uu) / (2 * t) + lpre
            return np.exp(logw) * kernels.eval_terms(terms, t, x, cut)

        val, _ = gk21(f, 0.0, self.r_max, QuadratureParams(abs_tol=1e-16, rel_tol=1e-12))
        return val


@lru_cache(maxsize=64)
def _hyp_weights(n: int, t: float, level: int) -> _HypWeights:
    return _HypWeights(n, t, 0.5 * min(1.0, math.sqrt(t)) / 2 ** level)


def _hyp_integrate(n, t, u_max, g, tol, max_level=5, return_key=False):
    """K e^{-2nt}-free integral of omega(u) g(u) over [0, u_max] with panel error control."""
    for level in range(max_level + 1):
        w = _hyp_weights(n, t, level)
        npan = int(math.ceil(u_max / w.h))
        om = w.upto(npan)
        u = w.nodes(0, npan).reshape(npan, 21)
        gu = g(u, (level, npan))
        half = 0.5 * w.h
        k = (om * gu) @ WK * half
        gg = (om * gu) @ WG * half
        err = float(np.abs(k - gg).sum())
        if err <= tol:
            return float(k.sum()), ((level, npan) if return_key else err)
    raise QuadratureFailure(f"hyperbolic u-integral did not reach {tol} (error {err})")


def hyp_cf(q: CharFnQuery, tol: float = 1e-10) -> float:
    """CF of the area on quaternionic hyperbolic space.

    Uses e^{-(4n+1)t/2 - |l|^2 t/2} cosh(nu u) e^{-u^2/2t}
        = e^{-2nt} [g(u - nu t) + g(u + nu t)] / 2,   g(y) = e^{-y^2/2t},
    so the exponentially large cosh never appears.
    """
    n, t = q.n, q.t
    nu = math.sqrt(q.lam_norm ** 2 + 1.0)
    c = hyp_cf_constant(n) * math.exp(-2 * n * t)
    u_max = nu * t + math.sqrt(2 * t * HYP_TAIL_LOG) + 2.0

    def g(u, key):
        return 0.5 * (np.exp(-(u - nu * t) ** 2 / (2 * t)) + np.exp(-(u + nu * t) ** 2 / (2 * t)))

    val, _ = _hyp_integrate(n, t, u_max, g, tol / c)
    return c * val


def hyp_normalization_report(n: int, t: float) -> dict:
    """Mass at lambda = 0 with and without the sphere-area constant."""
    q = CharFnQuery(Space.HYPERBOLIC, n, t)
    with_const = hyp_cf(q)
    c = hyp_cf_constant(n)
    return {
        "n": n, "t": t,
        "applied_constant": c,
        "cf_at_zero": with_const,
        "cf_at_zero_without_constant": with_const / c,
    }


def _log_bessel_half_series(m, u):
    """log I_{m-1/2}(u) for integer arrays m and positive u (broadcast)."""
    nu = m - 0.5
    q = (0.5 * u) ** 2
    term = np.ones(np.broadcast(m, u).shape)
    s = term.copy()
    j = 0
    while True:
        j += 1
        term = term * q / (j * (j + nu))
        s = s + term
        if j > 2 and np.all(term <= 1e-17 * s):
            break
        if j > 20000:
            raise SeriesDivergence("Bessel series did not settle")
    return nu * np.log(0.5 * u) - _lgamma(nu + 1.0) + np.log(s)


_lgamma = np.vectorize(math.lgamma, otypes=[float])


def _series_length(u, t):
    umax = float(np.max(u))
    m_top = int(math.ceil(umax * umax / t + 12 * umax / math.sqrt(t) + 60))
    if m_top > 20000:
        raise SeriesDivergence("series length exceeds budget")
    return m_top


_BESSEL_CACHE: dict = {}


def _bessel_table(n, t, key, u):
    """log I_{m-1/2}(u) on the node set identified by key; independent of rho."""
    ck = (n, t) + key
    tab = _BESSEL_CACHE.get(ck)
    if tab is None:
        m = np.arange(_series_length(u, t) + 1)[:, None]
        tab = _log_bessel_half_series(m, u[None, :])
        if len(_BESSEL_CACHE) > 16:
            _BESSEL_CACHE.clear()
        _BESSEL_CACHE[ck] = tab
    return tab


def _hyp_density_series(u, rho, t, p: SeriesParams, log_i=None, with_abs=False):
    """e^{-u^2/2t} sum_m (-1)^m/m! sqrt(pi) (u/2)^{m+1/2} I_{m-1/2}(u) Q_{2m}(v, t).

    Terms are assembled in log form: the m-th one is
    (-1)^m sqrt(pi) (u^2/t)^m I_{m-1/2}(u) (u/2)^{-(m-1/2)} ... written via the
    scaled table qhat_m = Q_{2m} t^m / (m! 4^m).
    """
    u = np.asarray(u, dtype=float)
    m_top = _series_length(u, t)
    qhat = q2m_radial_table(m_top, rho, t)
    m = np.arange(m_top + 1)[:, None]
    uu = u[None, :]
    if log_i is None:
        log_i = _log_bessel_half_series(m, uu)
    # sqrt(pi) (u/2)^{m+1/2} I (4^m t^-m) qhat = sqrt(pi) (u/2)^{1/2} (2u/t)^m I qhat
    with np.errstate(divide="ignore"):
        lq = np.log(np.abs(qhat))[:, None]
    logmag = 0.5 * math.log(math.pi) + 0.5 * np.log(uu / 2) + m * np.log(2 * uu / t) \
        + log_i + lq - uu * uu / (2 * t)
    sign = np.where(m % 2 == 0, 1.0, -1.0) * np.sign(qhat)[:, None]
    terms = sign * np.exp(logmag)
    # guard: termwise majorant sqrt(pi) u^{2m} e^u e^{rho^2/4t} (m+1)(m+2) / (2 t^m Gamma(m+1/2))
    logmaj = 0.5 * math.log(math.pi) + 2 * m * np.log(uu) + uu + rho * rho / (4 * t) \
        + np.log((m + 1.0) * (m + 2.0) / 2) - m * math.log(t) - _lgamma(m + 0.5) - uu * uu / (2 * t)
    if np.any(logmag > logmaj + 1e-8):
        raise SeriesDivergence("series term exceeds its majorant")
    partial = np.cumsum(terms, axis=0)
    small = np.abs(terms) < p.rel_tol * np.abs(partial)
    # index where `run` consecutive small terms first complete, per node
    run = np.ones_like(small, dtype=int) * small
    for k in range(1, p.run):
        run[k:] = run[k:] * small[:-k] if k < small.shape[0] else run[k:]
        run[:k] = 0
    done = run.astype(bool)
    if not np.all(done.any(axis=0)):
        raise SeriesDivergence("density series did not meet the truncation rule")
    stop = np.argmax(done, axis=0)
    cols = np.arange(u.size)
    if with_abs:
        return partial[stop, cols], np.cumsum(np.abs(terms), axis=0)[stop, cols]
    return partial[stop, cols]


def hyp_density(v, t: float, n: int, p: SeriesParams = SeriesParams(), tol: float = 1e-12) -> float:
    """Density of the area on quaternionic hyperbolic space at v."""
    if not t > 0:
        raise DomainError("t must be positive")
    rho = _as_vec(v).norm() if not np.isscalar(v) else abs(float(v))
    c = hyp_cf_constant(n) * math.exp(-(4 * n + 1) * t / 2) * (2 * math.pi * t) ** -1.5 \
        * math.exp(-rho * rho / (2 * t))
    u_max = _hyp_density_range(n, t, rho)

    abs_sum = {}

    def g(u, key):
        log_i = _bessel_table(n, t, key, u.ravel())
        val, mag = _hyp_density_series(u.ravel(), rho, t, p, log_i, with_abs=True)
        abs_sum[key] = mag.reshape(u.shape)
        return val.reshape(u.shape)

    val, key = _hyp_integrate(n, t, u_max, g, max(tol / c, 1e-13), return_key=True)
    out = c * val
    if out < 0:
        # roundoff scale of the alternating sum
        om = _hyp_weights(n, t, key[0]).upto(key[1])
        noise = 1e-14 * c * float(np.abs(om * abs_sum[key]).sum()) * _hyp_weights(n, t, key[0]).h
        if -out > noise:
            raise NegativeDensity(f"hyperbolic density {out} at |v|={rho}")
        out = 0.0
    return out


def _hyp_density_range(n, t, rho):
    """Upper u-limit: past it omega(u) (1+u)^4 e^{rho^2/4t} < 1e-15 on two panels."""
    w = _hyp_weights(n, t, 0)
    k = 4
    while True:
        om = w.upto(k)
        u_hi = k * w.h
        tail = np.abs(om[-2:]).max() * (1 + u_hi) ** 4 * math.exp(rho * rho / (4 * t))
        if tail < 1e-15 * max(1.0, float(np.abs(om).max())):
            return u_hi
        k += 4
        if k * w.h > 200:
            raise QuadratureFailure("hyperbolic density: weight tail does not decay")


# ----------------------------------------------------------------------------
# projective space

def proj_cf_integral(q: CharFnQuery, p: QuadratureParams = QuadratureParams(abs_tol=1e-13)) -> float:
    mu = q.mu
    kp = kernels.CircularKernelParams.for_projective(q.n, mu, q.t)

    def f(r):
        return kernels.circular_jacobi_kernel(kp, r) / np.cos(r) ** mu

    val, err = gk21(f, 0.0, math.pi / 2, p)
    return math.exp(-2 * q.n * mu * q.t) * val


def _proj_series_term(n, mu, t, j):
    """Signed j-th term (without the e^{-2n mu t} prefactor)."""
    a = mu / 2
    # mu(mu+2)/4 Gamma(j + mu/2) = ((mu+2)/2) * (mu/2) Gamma(j + mu/2); at j = 0 the
    # product (mu/2) Gamma(mu/2) is Gamma(1 + mu/2), which stays finite at mu = 0
    if j == 0:
        lg_head = math.lgamma(1 + a)
    else:
        if mu == 0.0:
            return 0.0
        lg_head = math.log(a) + math.lgamma(j + a)
    lg = math.log((mu + 2) / 2) + lg_head + math.lgamma(j + 2 * n + mu + 1) \
        - math.lgamma(j + a + 2 * n + 2) - math.lgamma(j + mu + 2) \
        + math.lgamma(2 * n + j) - math.lgamma(2 * n) - math.lgamma(j + 1) \
        + math.log(2 * j + 2 * n + mu + 1) - 2 * j * (j + 2 * n + mu + 1) * t
    return (-1) ** j * math.exp(lg)


def proj_cf_series(q: CharFnQuery, p: SeriesParams = SeriesParams()) -> float:
    n, t, mu = q.n, q.t, q.mu
    if mu == 0.0:
        return 1.0
    total, _ = _truncate((_proj_series_term(n, mu, t, j) for j in range(p.max_terms + 1)), p)
    return math.exp(-2 * n * mu * t) * total


@dataclass(frozen=True)
class PartialFractionTable:
    n: int
    j: int
    exact: tuple  # Fractions, k = 0..2n+1

    @property
    def a(self) -> np.ndarray:
        return np.array([float(x) for x in self.exact])

    def lhs(self, mu: float) -> float:
        return _pf_lhs(self.n, self.j, mu)

    def rhs(self, mu: float) -> float:
        # the residues alternate and grow with n and j, so the sum is formed
        # exactly at the (binary) value of mu and rounded once
        m = Fraction(mu)
        total = Fraction(2) ** (2 * self.n) + sum(
            ak / (m + 2 * self.j + 2 * k) for k, ak in enumerate(self.exact) if ak != 0)
        return float(total)


def _pf_numerator(n, j, mu):
    out = (2 * j + 2 * n + mu + 1) * mu * (mu + 2) / 4
    for i in range(2, 2 * n + 1):
        out = out * (j + mu + i)
    return out


def _pf_lhs(n, j, mu):
    den = 1.0
    for k in range(2 * n + 2):
        den *= j + mu / 2 + k
    return _pf_numerator(n, j, mu) / den


def partial_fraction_coeffs(n: int, j: int) -> PartialFractionTable:
    """Residues of (2j+2n+mu+1) mu(mu+2)/4 prod_{i=2}^{2n}(j+mu+i) / prod_{k=0}^{2n+1}(j+mu/2+k).

    The denominator is 2^{-(2n+2)} prod_k (mu + 2j + 2k), so at the simple pole
    mu = -2j-2k the residue is 2 N(mu_k) / prod_{k' != k} (k' - k).
    """
    if n < 1 or j < 0:
        raise DomainError("need n >= 1 and j >= 0")
    poles = [-2 * j - 2 * k for k in range(2 * n + 2)]
    if len(set(poles)) != len(poles):
        raise DegenerateResidue("coincident poles")
    out = []
    for k in range(2 * n + 2):
        num = _pf_numerator(n, j, Fraction(poles[k]))
        den = 1
        for kk in range(2 * n + 2):
            if kk != k:
                den *= kk - k
        out.append(Fraction(2) * num / den)
    return PartialFractionTable(n, j, tuple(out))


def relativistic_cauchy_density(rho, s):
    """3-D relativistic Cauchy density (mass 1) with scale s, at radius rho."""
    rho = np.asarray(rho, dtype=float)
    w = np.sqrt(rho * rho + s * s)
    return s * np.exp(s - w) * bessel_k2_scaled(w) / (2 * math.pi ** 2 * w * w)


def proj_density(x, t: float, n: int, p: SeriesParams = SeriesParams(),
                 q: QuadratureParams = QuadratureParams(abs_tol=1e-14)) -> float:
    """Density of the area on quaternionic projective space at x."""
    if not t > 0:
        raise DomainError("t must be positive")
    rho = _as_vec(x).norm() if not np.isscalar(x) else abs(float(x))

    def term(j):
        damp = -2 * j * (j + 2 * n + 1) * t
        if damp < -745:
            return 0.0
        s = (2 * j + 2 * n) * t
        tab = partial_fraction_coeffs(n, j)
        val = 2.0 ** (2 * n) * float(relativistic_cauchy_density(rho, s))
        for k, ak in enumerate(tab.exact):
            if ak == 0:
                continue
            rate = 2 * (j + k)
            u_max = (HYP_TAIL_LOG + 10) / rate
            f = lambda u: np.exp(-rate * u) * relativistic_cauchy_density(rho, u + s)
            iv, _ = gk21(f, 0.0, u_max, q)
            val += float(ak) * iv
        coef = math.exp(math.lgamma(2 * n + j) - math.lgamma(2 * n) - math.lgamma(j + 1) + damp)
        return (-1) ** j * coef * val

    total, _ = _truncate((term(j) for j in range(p.max_terms + 1)), p)
    return total


# ----------------------------------------------------------------------------

def clt_limit_cf(space, n: int, lam) -> float:
    space = Space(space)
    l2 = _as_vec(lam).norm() ** 2
    if space is Space.HYPERBOLIC:
        return math.exp(-l2 / 2)
    if space is Space.PROJECTIVE:
        return math.exp(-n * l2)
    raise DomainError("CLT limit is defined for the curved spaces only")


def char_fn(q: CharFnQuery, method: str = "closed") -> float:
    """Dispatch used by the command line."""
    table = {
        (Space.FLAT, "closed"): flat_cf,
        (Space.HYPERBOLIC, "integral"): hyp_cf,
        (Space.PROJECTIVE, "series"): proj_cf_series,
        (Space.PROJECTIVE, "integral"): proj_cf_integral,
    }
    try:
        fn = table[(q.space, method)]
    except KeyError:
        raise DomainError(f"method {method!r} not available for {q.space.value}") from None
    return fn(q)


def density(space, rho: float, t: float, n: int) -> float:
    space = Space(space)
    if space is Space.FLAT:
        return flat_density(rho, t, n)
    if space is Space.HYPERBOLIC:
        return hyp_density(rho, t, n)
    return proj_density(rho, t, n)
