"""Monte Carlo simulation of the radial diffusions and the area process.

Radial equations (c = (4n-1)/2):

    flat         dr = c / r dt + dW
    hyperbolic   dr = (c coth r + 3/2 tanh r) dt + dW
    projective   dr = (c cot r - 3/2 tan r) dt + dW

The singular drift terms are treated implicitly (drift-implicit Euler,
noise explicit): an explicit step from r0 = 1e-4 would move the path by
c dt / r0, which is O(10) at dt = 1e-3. The implicit step stays in the
domain and keeps the comparison bound r_k >= r0 + c t_k + W_k exactly in
the hyperbolic case.

Random numbers: each path owns one stream (see rng.py); the order in which
a path consumes it is documented on each simulator.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
import math

import numpy as np

from .analytic import Space
from .errors import BlowUp, ChartFailure, DomainError
from .quat import (SU2Element, Su2Vector, qconj, qmul, qnorm2, renormalize, su2_exp_array,
                   su2_log_array, unit_left_mul)
from .quat import stochastic_exponential as _stoch_exp_array
from .rng import PathStreams, thread_count

R0_DEFAULT = 1e-4
R_GUARD = 1e-6
CHUNK = 8192
BLOCK = 128
CHART_MIN = 1e-6


class Route(str, Enum):
    TIMECHANGE = "timechange"
    DIRECT = "direct"
    AMBIENT = "ambient"


@dataclass(frozen=True)
class SimConfig:
    space: Space
    n: int
    t_final: float
    dt: float
    n_paths: int
    seed: int
    r0: float = R0_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "space", Space(self.space))
        if self.n < 1:
            raise DomainError("n must be positive")
        if not (self.t_final > 0 and self.dt > 0):
            raise DomainError("t_final and dt must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise DomainError("dt must not exceed t_final")
        if self.n_paths < 1:
            raise DomainError("n_paths must be at least 1")
        if self.r0 < 0:
            raise DomainError("r0 must be nonnegative")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def h(self) -> float:
        return self.t_final / self.n_steps

    def as_dict(self) -> dict:
        d = asdict(self)
        d["space"] = self.space.value
        return d


@dataclass
class RadialPath:
    times: np.ndarray
    r: np.ndarray          # (paths, len(times))
    clock: np.ndarray      # (paths, len(times))
    bm: np.ndarray | None = None  # driving Brownian motion at the same times
    clock_ito: np.ndarray | None = None  # projective terminal clock, Ito form


@dataclass
class AreaSample:
    a: np.ndarray                   # (paths, 3)
    route: Route
    theta: np.ndarray | None = None  # (paths, 4) unit quaternions
    r: np.ndarray | None = None      # terminal radius
    clock: np.ndarray | None = None  # terminal clock
    discarded: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.a.shape[0]


@dataclass
class AmbientPath:
    q: np.ndarray  # terminal states (paths, n+1, 4)
    times: np.ndarray
    max_verticality: float
    max_norm_drift: float


# ----------------------------------------------------------------------------
# radial dynamics

def clock_rate(space: Space, r):
    if space is Space.FLAT:
        return 0.25 * r * r
    if space is Space.HYPERBOLIC:
        return np.tanh(r) ** 2
    return np.tan(r) ** 2


def fiber_rate_sqrt(space: Space, r):
    if space is Space.HYPERBOLIC:
        return np.tanh(r)
    if space is Space.PROJECTIVE:
        return np.tan(r)
    return 0.5 * r


def radial_step(space: Space, n: int, r, h: float, dw):
    c = (4 * n - 1) / 2.0
    if space is Space.FLAT:
        x = r + dw
        return 0.5 * (x + np.sqrt(x * x + 4 * c * h))
    if space is Space.HYPERBOLIC:
        return _solve_coth(r + 1.5 * h * np.tanh(r) + dw, c * h)
    return _solve_proj(r + dw, c * h, 1.5 * h)


def _solve_coth(x, ch):
    """Root of y - ch coth y = x. Started from the flat root, which lies to the
    left; the function is convex and increasing, so Newton then decreases
    monotonically to the root."""
    y = 0.5 * (x + np.sqrt(x * x + 4 * ch))
    for _ in range(60):
        with np.errstate(over="ignore"):
            s2 = np.sinh(y) ** 2
        g = y - ch / np.tanh(y) - x
        step = g / (1.0 + ch / s2)
        y = y - step
        if np.all(np.abs(step) <= 4e-16 * np.maximum(y, 1.0)):
            break
    return y


def _solve_proj(x, ch, th):
    """Root in (0, pi/2) of y - ch cot y + th tan y = x (increasing in y)."""
    lo = np.zeros_like(x)
    hi = np.full_like(x, math.pi / 2)
    y = np.clip(0.5 * (x + np.sqrt(x * x + 4 * ch)), 1e-300, math.pi / 2 - 1e-9)
    for _ in range(200):
        tn = np.tan(y)
        g = y - ch / tn + th * tn - x
        hi = np.where(g > 0, y, hi)
        lo = np.where(g <= 0, y, lo)
        gp = 1.0 + ch * (1.0 + 1.0 / tn ** 2) + th * (1.0 + tn * tn)
        y_new = y - g / gp
        bad = (y_new < lo) | (y_new > hi)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        tol = 2e-15 * np.maximum(y_new, 1.0)
        done = (np.abs(y_new - y) <= tol) | (hi - lo <= tol)
        y = y_new
        if np.all(done):
            break
    return y


def ito_terminal_clock(n: int, t: float, r0, r_t, ito_sum):
    """2n t + log(cos r_t / cos r_0) + sum tan(r_k) dW_k, clipped at 0."""
    c = 2 * n * t + np.log(np.cos(r_t) / np.cos(r0)) + ito_sum
    return np.maximum(c, 0.0)


def _guard(space: Space, r, first: int):
    r = np.where(r < R_GUARD, 2 * R_GUARD - r, r)
    if space is Space.PROJECTIVE:
        top = math.pi / 2 - R_GUARD
        r = np.where(r > top, 2 * top - r, r)
    if not np.all(np.isfinite(r)):
        bad = int(np.flatnonzero(~np.isfinite(r))[0]) + first
        raise BlowUp(f"radial path {bad} left the domain")
    return r


def _run_chunks(n_paths: int, worker):
    chunks = [(s, min(CHUNK, n_paths - s)) for s in range(0, n_paths, CHUNK)]
    workers = min(thread_count(), len(chunks))
    if workers <= 1:
        results = [worker(*c) for c in chunks]
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda c: worker(*c), chunks))
    return {k: np.concatenate([res[k] for res in results]) for k in results[0]}


def _blocks(n_steps: int):
    for k0 in range(0, n_steps, BLOCK):
        yield k0, min(BLOCK, n_steps - k0)


# ----------------------------------------------------------------------------
# public simulators

def simulate_radial(cfg: SimConfig, record: bool = False, noise_scale: float = 1.0) -> RadialPath:
    """Radial process and its clock int_0^t f(r) ds (trapezoid rule).

    Stream layout: one normal per step. With record=False only the initial
    and terminal values are kept.
    """
    N, h, space = cfg.n_steps, cfg.h, cfg.space
    sq = math.sqrt(h) * noise_scale

    def worker(first, count):
        streams = PathStreams(cfg.seed, first, count)
        r = np.full(count, float(cfg.r0))
        clock = np.zeros(count)
        ito = np.zeros(count)
        w = np.zeros(count)
        cols = N + 1 if record else 2
        R = np.empty((count, cols)); C = np.empty((count, cols)); W = np.empty((count, cols))
        R[:, 0], C[:, 0], W[:, 0] = r, 0.0, 0.0
        f_old = clock_rate(space, r)
        for k0, L in _blocks(N):
            z = streams.normals(L)
            for k in range(L):
                dw = sq * z[:, k]
                if proj:
                    ito = ito + np.tan(r) * dw
                r = _guard(space, radial_step(space, cfg.n, r, h, dw), first)
                f_new = clock_rate(space, r)
                clock = clock + 0.5 * h * (f_old + f_new)
                f_old = f_new
                w = w + dw
                if record:
                    R[:, k0 + k + 1], C[:, k0 + k + 1], W[:, k0 + k + 1] = r, clock, w
        R[:, -1], C[:, -1], W[:, -1] = r, clock, w
        return {"r": R, "clock": C, "bm": W, "ito": ito}

    proj = space is Space.PROJECTIVE
    out = _run_chunks(cfg.n_paths, worker)
    times = np.linspace(0.0, cfg.t_final, N + 1) if record else np.array([0.0, cfg.t_final])
    ito_clock = None
    if proj:
        ito_clock = ito_terminal_clock(cfg.n, cfg.t_final, cfg.r0, out["r"][:, -1], out["ito"])
    return RadialPath(times, out["r"], out["clock"], out["bm"], ito_clock)


def fiber_sign(space: Space) -> float:
    """Theta^{-1} dTheta = sign * da on the hyperbolic (+) and projective (-) sides."""
    return -1.0 if space is Space.PROJECTIVE else 1.0


def simulate_area_timechange(cfg: SimConfig, with_theta: bool = False) -> AreaSample:
    """Area as a 3-d Brownian motion run with the radial clock.

    Without theta the terminal value sqrt(clock) * Z is drawn directly; stream
    layout: N radial normals, then 3 for Z. With theta the real-time increments
    d(gamma) are drawn step by step (layout per step: dW, then 3 for d(gamma)),
    da = f^{1/2}(r_mid) d(gamma) and Theta is the product of exp(sign * da).
    The flat case has no fiber, so theta is not produced there.
    """
    N, h, space = cfg.n_steps, cfg.h, cfg.space
    sq = math.sqrt(h)
    track = with_theta and space is not Space.FLAT
    proj = space is Space.PROJECTIVE
    sign = fiber_sign(space)

    def worker(first, count):
        streams = PathStreams(cfg.seed, first, count)
        r = np.full(count, float(cfg.r0))
        clock = np.zeros(count)
        ito = np.zeros(count)
        f_old = clock_rate(space, r)
        a = np.zeros((count, 3))
        th = np.zeros((count, 4)); th[:, 0] = 1.0
        per = 4 if with_theta else 1
        for k0, L in _blocks(N):
            z = streams.normals(L * per).reshape(count, L, per)
            for k in range(L):
                dw = sq * z[:, k, 0]
                if proj:
                    ito = ito + np.tan(r) * dw
                r_new = _guard(space, radial_step(space, cfg.n, r, h, dw), first)
                f_new = clock_rate(space, r_new)
                clock = clock + 0.5 * h * (f_old + f_new)
                if with_theta:
                    da = fiber_rate_sqrt(space, 0.5 * (r + r_new))[:, None] * (sq * z[:, k, 1:])
                    a = a + da
                    if track:
                        th = qmul(th, su2_exp_array(sign * da))
                        if (k0 + k + 1) % 64 == 0:
                            th = renormalize(th)
                f_old, r = f_new, r_new
        if proj:
            clock = ito_terminal_clock(cfg.n, cfg.t_final, cfg.r0, r, ito)
        if not with_theta:
            a = np.sqrt(clock)[:, None] * streams.normals(3)
        return {"a": a, "theta": renormalize(th), "r": r, "clock": clock}

    out = _run_chunks(cfg.n_paths, worker)
    return AreaSample(out["a"], Route.TIMECHANGE, out["theta"] if track else None,
                      out["r"], out["clock"])


def _im_mul_conj(p, q):
    """Imaginary part of p * conj(q) for quaternion arrays (..., 4)."""
    return qmul(p, qconj(q))[..., 1:]


def simulate_area_direct_flat(cfg: SimConfig) -> AreaSample:
    """Area (1/2) sum_i Im(dB_i conj(B_i)) of a 4n-dim Brownian motion (left-point sums).

    Stream layout: 4n normals per step, ordered (coordinate i, component).
    """
    if cfg.space is not Space.FLAT:
        raise DomainError("the direct route exists for the flat space only")
    N, h, n = cfg.n_steps, cfg.h, cfg.n
    sq = math.sqrt(h)

    def worker(first, count):
        streams = PathStreams(cfg.seed, first, count)
        B = np.zeros((count, n, 4))
        a = np.zeros((count, 3))
        clock = np.zeros(count)
        f_old = np.zeros(count)
        for k0, L in _blocks(N):
            z = streams.normals(L * 4 * n).reshape(count, L, n, 4)
            for k in range(L):
                dB = sq * z[:, k]
                a = a + 0.5 * _im_mul_conj(dB, B).sum(axis=1)
                B = B + dB
                f_new = 0.25 * np.sum(B * B, axis=(1, 2))
                clock = clock + 0.5 * h * (f_old + f_new)
                f_old = f_new
        r = np.sqrt(np.sum(B * B, axis=(1, 2)))
        return {"a": a, "r": r, "clock": clock}

    out = _run_chunks(cfg.n_paths, worker)
    return AreaSample(out["a"], Route.DIRECT, None, out["r"], out["clock"])


def horizontal_projection(X, xi):
    """Remove from xi its components along X and I X, J X, K X (left action)."""
    out = xi - np.sum(xi * X, axis=(-2, -1))[..., None, None] * X
    for unit in (1, 2, 3):
        SX = unit_left_mul(X, unit)
        out = out - np.sum(xi * SX, axis=(-2, -1))[..., None, None] * SX
    return out


def verticality_residual(X, v):
    """max over S in {1, I, J, K} of |<v, S X>|."""
    res = np.abs(np.sum(v * X, axis=(-2, -1)))
    for unit in (1, 2, 3):
        res = np.maximum(res, np.abs(np.sum(v * unit_left_mul(X, unit), axis=(-2, -1))))
    return res


def simulate_ambient_sphere(cfg: SimConfig, substeps: int = 1):
    """Horizontal Brownian motion on S^{4n+3} started at the north pole.

    Stratonovich equation dX = P(X) o dB, integrated by Heun's predictor-
    corrector and renormalized to |X| = 1 after each step. From
    w_i = q_{n+1}^{-1} q_i the area increments are
    da = sum_i Im(dw_i conj(w_i)) / (1 + rho_mid^2), and the fiber is
    Theta = q_{n+1} / |q_{n+1}|.

    The driving noise is drawn on a grid `substeps` times finer than dt and
    summed, so runs at dt and dt/2 can share one Brownian path. Stream layout:
    4n+4 normals per fine step. Paths whose |q_{n+1}| drops below 1e-6 are
    discarded and counted.
    """
    if cfg.space is not Space.PROJECTIVE:
        raise DomainError("the ambient route simulates the projective space only")
    N, h, n = cfg.n_steps, cfg.h, cfg.n
    d = n + 1
    sq_fine = math.sqrt(h / substeps)

    def worker(first, count):
        streams = PathStreams(cfg.seed, first, count)
        X = np.zeros((count, d, 4)); X[:, -1, 0] = 1.0
        w = np.zeros((count, n, 4))
        a = np.zeros((count, 3))
        th_dev = np.zeros((count, 4)); th_dev[:, 0] = 1.0
        clock = np.zeros(count)
        f_old = np.zeros(count)
        alive = np.ones(count, dtype=bool)
        vert, drift = 0.0, 0.0
        for k0, L in _blocks(N):
            z = streams.normals(L * substeps * 4 * d).reshape(count, L, substeps, d, 4)
            for k in range(L):
                xi = sq_fine * z[:, k].sum(axis=1)
                k1 = horizontal_projection(X, xi)
                scale = np.sqrt(np.sum(xi * xi, axis=(1, 2)))
                vert = max(vert, float(np.max(verticality_residual(X, k1) / np.maximum(scale, 1e-300))))
                Xp = renormalize_rows(X + k1)
                k2 = horizontal_projection(Xp, xi)
                Y = X + 0.5 * (k1 + k2)
                drift = max(drift, float(np.max(np.abs(np.sqrt(np.sum(Y * Y, axis=(1, 2))) - 1.0))))
                X = renormalize_rows(Y)
                last_norm = np.sqrt(qnorm2(X[:, -1]))
                alive &= last_norm >= CHART_MIN
                safe_last = np.where(alive[:, None], X[:, -1], np.array([1.0, 0, 0, 0]))
                inv_last = qconj(safe_last) / qnorm2(safe_last)[:, None]
                w_new = qmul(inv_last[:, None, :], X[:, :-1])
                rho2_mid = np.sum((0.5 * (w + w_new)) ** 2, axis=(1, 2))
                da = _im_mul_conj(w_new - w, w).sum(axis=1) / (1.0 + rho2_mid)[:, None]
                a = a + da
                th_dev = qmul(th_dev, su2_exp_array(-da))
                if (k0 + k + 1) % 64 == 0:
                    th_dev = renormalize(th_dev)
                f_new = np.sum(w_new * w_new, axis=(1, 2))  # tan^2 r = rho^2
                clock = clock + 0.5 * h * (f_old + f_new)
                f_old, w = f_new, w_new
        last = X[:, -1]
        th_amb = last / np.sqrt(qnorm2(last))[:, None]
        gap = qmul(qconj(th_amb), renormalize(th_dev))
        gap = np.where(gap[:, :1] < 0, -gap, gap)  # same rotation, nearer branch
        disc = np.sqrt(np.sum(su2_log_array(gap) ** 2, axis=1))
        r = np.arctan(np.sqrt(np.sum(w * w, axis=(1, 2))))
        return {"a": a, "theta": th_amb, "q": X, "r": r, "clock": clock, "alive": alive,
                "disc": disc, "vert": np.array([vert]), "drift": np.array([drift])}

    out = _run_chunks(cfg.n_paths, worker)
    keep = out["alive"]
    discarded = int((~keep).sum())
    if keep.sum() == 0:
        raise ChartFailure("every path crossed the chart boundary")
    diag = {
        "max_verticality": float(out["vert"].max()),
        "max_norm_drift": float(out["drift"].max()),
        "discrepancy": out["disc"][keep],
        "discrepancy_rms": float(np.sqrt(np.mean(out["disc"][keep] ** 2))),
    }
    sample = AreaSample(out["a"][keep], Route.AMBIENT, out["theta"][keep], out["r"][keep],
                        out["clock"][keep], discarded, diag)
    path = AmbientPath(out["q"][keep], np.array([0.0, cfg.t_final]),
                       diag["max_verticality"], diag["max_norm_drift"])
    return path, sample


def renormalize_rows(X):
    return X / np.sqrt(np.sum(X * X, axis=(-2, -1)))[..., None, None]


def stochastic_exponential(increments) -> SU2Element:
    """Ordered product of su2_exp over a sequence of Su2Vector (or 3-vector) increments."""
    inc = [v.as_array() if isinstance(v, Su2Vector) else np.asarray(v, dtype=float)
           for v in increments]
    if not inc:
        return SU2Element()
    return SU2Element.from_array(_stoch_exp_array(np.array(inc)))


def simulate(cfg: SimConfig, route: Route):
    route = Route(route)
    if route is Route.DIRECT:
        return simulate_area_direct_flat(cfg)
    if route is Route.AMBIENT:
        return simulate_ambient_sphere(cfg)[1]
    return simulate_area_timechange(cfg)
