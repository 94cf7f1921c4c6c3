"""Acceptance battery shared by `qsa verify` and the acceptance tests.

Each criterion returns a CriterionResult holding one or more checks. Reports
contain no timings, so a seeded rerun reproduces the report exactly.

Mutation hook: QSA_VERIFY_CORRUPT=<name> scales one analytic quantity by
1.01 for the duration of the run (names in CORRUPTIONS), which must make the
criteria that depend on it fail.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from fractions import Fraction
import json
import math
import os
import tempfile
import time

import mpmath
import numpy as np
from scipy import integrate

from . import analytic, kernels, specfun
from .analytic import CharFnQuery, Space
from .sim import SimConfig, simulate_ambient_sphere, simulate_area_direct_flat, simulate_area_timechange
from .stats import covariance_test, ecf, energy_distance_test

CORRUPT_ENV = "QSA_VERIFY_CORRUPT"
CORRUPTIONS = {
    "flat_cf": (analytic, "flat_cf"),
    "hyp_constant": (analytic, "hyp_cf_constant"),
    "circular_kernel": (kernels, "circular_jacobi_kernel"),
    "proj_series": (analytic, "proj_cf_series"),
}


@dataclass(frozen=True)
class SuiteConfig:
    name: str
    flat_ecf_paths: int
    hyp_ecf_paths: int
    clt_paths: int
    energy_paths: int
    ambient_paths: int


SUITES = {
    "full": SuiteConfig("full", 200_000, 200_000, 20_000, 10_000, 2_000),
    "quick": SuiteConfig("quick", 20_000, 20_000, 10_000, 2_000, 500),
}


@dataclass
class CriterionResult:
    id: str
    title: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c["passed"] for c in self.checks)

    def add(self, name, value, reference, tolerance, passed=None, **extra):
        err = abs(value - reference) if reference is not None else None
        if passed is None:
            passed = err <= tolerance
        self.checks.append({"name": name, "value": value, "reference": reference,
                            "error": err, "tolerance": tolerance, "passed": bool(passed), **extra})

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        worst = [c for c in self.checks if not c["passed"]] or self.checks[-1:]
        c = worst[0] if worst else {}
        return f"[{status}] criterion {self.id}: {self.title} ({c.get('name', '')}: error {c.get('error')} vs tol {c.get('tolerance')})"

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "passed": self.passed,
                "checks": _clean(self.checks)}


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


@contextmanager
def corruption(name: str | None):
    """Temporarily scale the named analytic function's output by 1.01."""
    if not name:
        yield
        return
    if name not in CORRUPTIONS:
        raise ValueError(f"unknown corruption target {name!r}; choose from {sorted(CORRUPTIONS)}")
    mod, attr = CORRUPTIONS[name]
    orig = getattr(mod, attr)
    setattr(mod, attr, lambda *a, **k: 1.01 * orig(*a, **k))
    try:
        yield
    finally:
        setattr(mod, attr, orig)


# ----------------------------------------------------------------------------
# finite-difference oracles (mpmath, Richardson-extrapolated central differences)

_FD_DPS = 60


def _richardson(points_fn, h, levels=4):
    """Richardson tableau over step sizes h, h/2, ...; points_fn(h) gives the raw estimate."""
    row = [points_fn(h / 2 ** k) for k in range(levels)]
    for m in range(1, levels):
        f = mpmath.mpf(4) ** m
        row = [(f * row[k + 1] - row[k]) / (f - 1) for k in range(len(row) - 1)]
    return row[0]


def fd_sinh_operator(t, x, k, h=mpmath.mpf("0.01")):
    """(1/sinh x . d/dx)^k exp(-x^2/2t) by nested Richardson differences."""
    with mpmath.workdps(_FD_DPS):
        t = mpmath.mpf(t)

        def make(level):
            if level == 0:
                return lambda y: mpmath.exp(-y * y / (2 * t))
            inner = make(level - 1)
            return lambda y: _richardson(lambda hh: (inner(y + hh) - inner(y - hh)) / (2 * hh), h) / mpmath.sinh(y)

        return make(k)(mpmath.mpf(x))


def fd_radial_laplacian_power(m, rho, t, h=mpmath.mpf("0.01")):
    """e^{rho^2/2t} Laplacian^m e^{-|v|^2/2t} at |v| = rho, Laplacian in radial form f'' + 2f'/rho."""
    with mpmath.workdps(_FD_DPS):
        t = mpmath.mpf(t)

        def make(level):
            if level == 0:
                return lambda y: mpmath.exp(-y * y / (2 * t))
            inner = make(level - 1)

            def lap(y):
                d2 = _richardson(lambda hh: (inner(y + hh) - 2 * inner(y) + inner(y - hh)) / hh ** 2, h)
                d1 = _richardson(lambda hh: (inner(y + hh) - inner(y - hh)) / (2 * hh), h)
                return d2 + 2 * d1 / y

            return lap

        r = mpmath.mpf(rho)
        return make(m)(r) * mpmath.exp(r * r / (2 * t))


def cf_inversion_density(cf, rho):
    """Radial 3-d density from an isotropic CF: (1/(2 pi^2 rho)) int k sin(k rho) cf(k) dk."""
    val, _ = integrate.quad(lambda k: k * cf(k), 0, np.inf, weight="sin", wvar=rho, limit=400)
    return val / (2 * math.pi ** 2 * rho)


# ----------------------------------------------------------------------------
# criteria

def _ecf_check(res, name, samples, lam_norm, reference, n_sigma=3.0):
    est = ecf(samples, (lam_norm, 0.0, 0.0))
    tol = n_sigma * est.stderr
    res.add(name, est.value.real, reference, tol, stderr=est.stderr,
            z=(est.value.real - reference) / est.stderr if est.stderr > 0 else 0.0)


def criterion_1(suite, seed):
    res = CriterionResult("1", "flat CF closed form vs direct-route ECF")
    cfg = SimConfig(Space.FLAT, 1, 1.0, 1e-3, suite.flat_ecf_paths, seed + 1)
    start = time.perf_counter()
    s = simulate_area_direct_flat(cfg)
    # the wall time itself is left out of the report to keep reruns identical
    fast = time.perf_counter() - start <= 120.0
    res.add("simulation within 120 s", float(fast), 1.0, 0.0, passed=fast)
    for L in (0.5, 1.0, 2.0):
        ref = analytic.flat_cf(CharFnQuery(Space.FLAT, 1, 1.0, (L, 0, 0)))
        _ecf_check(res, f"|lambda|={L}", s.a, L, ref)
    return res


def criterion_2(suite, seed):
    res = CriterionResult("2", "flat direct and time-change routes agree in law")
    m = suite.energy_paths
    x = simulate_area_direct_flat(SimConfig(Space.FLAT, 1, 1.0, 1e-3, m, seed + 2)).a
    y = simulate_area_timechange(SimConfig(Space.FLAT, 1, 1.0, 1e-3, m, seed + 3)).a
    rep = energy_distance_test(x, y, level=0.05, seed=seed)
    p = rep.metadata["p_value"]
    res.add("energy p-value", p, None, 0.05, passed=p >= 0.05, statistic=rep.statistic)
    return res


def criterion_3(suite, seed):
    res = CriterionResult("3", "flat density mass and agreement with CF inversion")
    n, t = 1, 1.0
    mass, _ = integrate.quad(lambda r: 4 * math.pi * r * r * analytic.flat_density(r, t, n), 0, 15, limit=200)
    res.add("mass", mass, 1.0, 1e-3)
    cf = lambda k: analytic.flat_cf(CharFnQuery(Space.FLAT, n, t, (k, 0, 0)))
    for rho in (0.5, 1.0, 2.0):
        ref = cf_inversion_density(cf, rho)
        val = analytic.flat_density(rho, t, n)
        res.add(f"density rho={rho} (relative)", val / ref, 1.0, 1e-3)
    return res


def criterion_4(suite, seed):
    res = CriterionResult("4", "hyperbolic CF equals 1 at lambda = 0")
    for t in (0.5, 1.0):
        res.add(f"t={t}", analytic.hyp_cf(CharFnQuery(Space.HYPERBOLIC, 1, t)), 1.0, 1e-5)
    return res


def criterion_5(suite, seed):
    res = CriterionResult("5", "hyperbolic time-change ECF vs analytic CF")
    s = simulate_area_timechange(SimConfig(Space.HYPERBOLIC, 1, 1.0, 1e-3, suite.hyp_ecf_paths, seed + 5))
    for L in (0.5, 1.0):
        ref = analytic.hyp_cf(CharFnQuery(Space.HYPERBOLIC, 1, 1.0, (L, 0, 0)))
        _ecf_check(res, f"|lambda|={L}", s.a, L, ref)
    return res


def _clt_check(res, name, space, t, target_scale, paths, seed):
    s = simulate_area_timechange(SimConfig(space, 1, t, 1e-2, paths, seed))
    rep = covariance_test(s.a / math.sqrt(t), target_scale * np.eye(3), rel_tol=0.1)
    md = rep.metadata
    res.add(f"{name} diagonal", rep.statistic, 0.0, 0.1, passed=rep.statistic <= 0.1,
            diagonal=np.diag(md["covariance"]))
    res.add(f"{name} off-diagonal |z|", md["max_abs_z"], 0.0, 3.0, passed=md["max_abs_z"] <= 3.0)


def criterion_6(suite, seed):
    res = CriterionResult("6", "hyperbolic CLT covariance at t = 20")
    _clt_check(res, "cov(a/sqrt t)", Space.HYPERBOLIC, 20.0, 1.0, suite.clt_paths, seed + 6)
    return res


def criterion_7(suite, seed):
    res = CriterionResult("7", "projective series equals integral")
    for t in (0.1, 0.5, 1.0):
        for L in (0.5, 1.0, 2.0):
            q = CharFnQuery(Space.PROJECTIVE, 1, t, (L, 0, 0))
            res.add(f"t={t} |lambda|={L}", analytic.proj_cf_series(q), analytic.proj_cf_integral(q), 1e-6)
    return res


def criterion_8(suite, seed):
    res = CriterionResult("8", "partial-fraction reconstruction and sum identity")
    rng = np.random.default_rng(seed + 8)
    for n in (1, 2, 3):
        for j in (0, 1, 3):
            tab = analytic.partial_fraction_coeffs(n, j)
            for mu in rng.uniform(0.0, 10.0, 3):
                lhs, rhs = tab.lhs(mu), tab.rhs(mu)
                res.add(f"n={n} j={j} mu={mu:.6f} (relative)", rhs / lhs if lhs else rhs, 1.0 if lhs else 0.0, 1e-10)
        a0 = analytic.partial_fraction_coeffs(n, 0).exact
        total = Fraction(2) ** (2 * n) + sum(a0[k] / (2 * k) for k in range(1, len(a0)))
        res.add(f"sum identity n={n}", float(total), 1.0, 1e-10)
    return res


def criterion_9(suite, seed):
    res = CriterionResult("9", "projective CLT: covariance at t = 10 and CF limit at t = 50")
    _clt_check(res, "cov(a/sqrt t)", Space.PROJECTIVE, 10.0, 2.0, suite.clt_paths, seed + 9)
    n, t = 1, 50.0
    for L in (0.5, 1.0, 2.0):
        val = analytic.proj_cf_series(CharFnQuery(Space.PROJECTIVE, n, t, (L / math.sqrt(t), 0, 0)))
        res.add(f"CF(lambda/sqrt t) at t=50, |lambda|={L}", val, math.exp(-n * L * L), 1e-3)
    return res


def criterion_10(suite, seed):
    res = CriterionResult("10", "circular Jacobi kernel nonnegative with unit mass")
    grid = np.linspace(0, math.pi / 2, 4001)[1:-1]
    for n in (1, 2):
        for mu in (0.0, 1.0):
            for t in (0.1, 1.0):
                p = kernels.CircularKernelParams.for_projective(n, mu, t)
                vals = kernels.circular_jacobi_kernel(p, grid, clamp=False)
                lo = float(np.min(vals))
                res.add(f"min n={n} mu={mu} t={t}", lo, None, -1e-12, passed=lo >= -1e-12)
                mass, _ = integrate.quad(lambda r: kernels.circular_jacobi_kernel(p, r, clamp=False),
                                         0, math.pi / 2, epsabs=1e-13, epsrel=1e-13, limit=200)
                res.add(f"mass n={n} mu={mu} t={t}", mass, 1.0, 1e-6)
    return res


def criterion_11(suite, seed):
    res = CriterionResult("11", "sphere lift verticality and fiber consistency")
    m = suite.ambient_paths
    coarse = SimConfig(Space.PROJECTIVE, 1, 0.5, 2e-3, m, seed + 11)
    fine = SimConfig(Space.PROJECTIVE, 1, 0.5, 1e-3, m, seed + 11)
    pc, sc = simulate_ambient_sphere(coarse, substeps=2)
    pf, sf = simulate_ambient_sphere(fine, substeps=1)
    vert = max(pc.max_verticality, pf.max_verticality)
    res.add("max verticality residual", vert, None, 1e-10, passed=vert <= 1e-10)
    ratio = sc.diagnostics["discrepancy_rms"] / sf.diagnostics["discrepancy_rms"]
    res.add("RMS ratio dt/(dt/2)", ratio, None, (1.2, 3.0), passed=1.2 <= ratio <= 3.0,
            rms_coarse=sc.diagnostics["discrepancy_rms"], rms_fine=sf.diagnostics["discrepancy_rms"])
    return res


def criterion_12(suite, seed):
    res = CriterionResult("12", "kernel operator and Hermite formula vs finite differences")
    rng = np.random.default_rng(seed + 12)
    for n in (1, 2):
        terms = kernels.kernel_terms(n)
        worst = 0.0
        for _ in range(20):
            t, x = float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.1, 3.0))
            val = float(kernels.eval_terms(terms, t, np.array([x]), kernels.small_x_cutoff(n))[0]) \
                * math.exp(-x * x / (2 * t))
            ref = float(fd_sinh_operator(t, x, 2 * n))
            worst = max(worst, abs(val / ref - 1.0))
        res.add(f"sinh operator n={n}, worst relative error over 20 points", worst, 0.0, 1e-6)
    for m in range(1, 5):
        worst = 0.0
        for _ in range(3):
            t, rho = float(rng.uniform(0.3, 2.0)), float(rng.uniform(0.2, 2.5))
            val = specfun.q2m_poly(m, np.array([rho, 0.0, 0.0]), t)
            ref = float(fd_radial_laplacian_power(m, rho, t))
            worst = max(worst, abs(val / ref - 1.0))
        res.add(f"Q_{2 * m} Hermite formula, worst relative error", worst, 0.0, 1e-6)
    return res


def criterion_13(suite, seed):
    from . import cli

    res = CriterionResult("13", "simulate output is byte-identical across thread counts")
    args = ["simulate", "--space", "hyperbolic", "--n", "1", "--t", "0.05", "--dt", "0.01",
            "--paths", "20000", "--seed", str(seed + 13)]
    blobs = []
    old = os.environ.get("QSA_THREADS")
    try:
        with tempfile.TemporaryDirectory() as tmp:
            for threads in ("1", "3", "1"):
                os.environ["QSA_THREADS"] = threads
                out = os.path.join(tmp, f"run{len(blobs)}")
                code = cli.main(args + ["--out", out])
                with open(os.path.join(out, cli.SAMPLES_NAME), "rb") as fh:
                    blobs.append((code, fh.read()))
    finally:
        if old is None:
            os.environ.pop("QSA_THREADS", None)
        else:
            os.environ["QSA_THREADS"] = old
    same = all(b == blobs[0] for b in blobs)
    res.add("identical CSV bytes for QSA_THREADS in {1, 3, 1}", float(same), 1.0, 0.0,
            passed=same and blobs[0][0] == 0)
    return res


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13]


def run_criterion(fn, suite: str = "full", seed: int = 0) -> CriterionResult:
    with corruption(os.environ.get(CORRUPT_ENV)):
        return fn(SUITES[suite], seed)


def run_suite(suite: str = "quick", seed: int = 0, progress=None) -> dict:
    results = []
    for fn in CRITERIA:
        r = run_criterion(fn, suite, seed)
        results.append(r)
        if progress:
            progress(r.line())
    from . import __version__

    return {
        "suite": suite, "seed": seed, "version": __version__,
        "corruption": os.environ.get(CORRUPT_ENV) or None,
        "all_passed": all(r.passed for r in results),
        "failed": [r.id for r in results if not r.passed],
        "criteria": [r.to_dict() for r in results],
    }


def report_json(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
