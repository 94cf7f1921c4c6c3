"""Empirical characteristic functions, covariance checks and a two-sample energy test."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from .errors import InsufficientSamples
from .quat import Su2Vector

N_PERMUTATIONS = 200
ENERGY_MIN_SAMPLES = 1000
COV_MIN_SAMPLES = 100
_ROW_CHUNK = 512


def as_sample_array(samples) -> np.ndarray:
    """(M, 3) float array from an array or a sequence of Su2Vector."""
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        arr = np.array([s.as_array() if isinstance(s, Su2Vector) else s for s in samples], dtype=float)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _lam_array(lam) -> np.ndarray:
    return lam.as_array() if isinstance(lam, Su2Vector) else np.asarray(lam, dtype=float)


@dataclass(frozen=True)
class EcfEstimate:
    lam: tuple
    value: complex
    stderr: float
    n_samples: int

    def within(self, target: complex, n_sigma: float = 3.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.stderr


def ecf(samples, lam) -> EcfEstimate:
    """Sample mean of exp(i lam . a_k).

    Sums use math.fsum, which is correctly rounded, so the estimate does not
    depend on the order of the samples. The standard error is the larger of
    the cosine and sine sample deviations over sqrt(M).
    """
    a = as_sample_array(samples)
    m = a.shape[0]
    if m < 2:
        raise InsufficientSamples(f"ecf needs at least 2 samples, got {m}")
    lv = _lam_array(lam)
    phase = a @ lv
    c, s = np.cos(phase), np.sin(phase)
    mc, ms = math.fsum(c) / m, math.fsum(s) / m
    vc = math.fsum((c - mc) ** 2) / (m - 1)
    vs = math.fsum((s - ms) ** 2) / (m - 1)
    se = math.sqrt(max(vc, vs) / m)
    return EcfEstimate(tuple(float(x) for x in lv), complex(mc, ms), se, m)


@dataclass
class StatReport:
    name: str
    statistic: float
    threshold: float
    passed: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def covariance_test(samples, target, rel_tol: float = 0.1, n_sigma: float = 3.0) -> StatReport:
    """Diagonal of the sample covariance within rel_tol of the target diagonal;
    off-diagonal entries within n_sigma standard errors of the target entries."""
    a = as_sample_array(samples)
    m, d = a.shape
    if m < COV_MIN_SAMPLES:
        raise InsufficientSamples(f"covariance_test needs at least {COV_MIN_SAMPLES} samples, got {m}")
    target = np.asarray(target, dtype=float)
    centered = a - a.mean(axis=0)
    cov = centered.T @ centered / (m - 1)
    diag_err = np.abs(np.diag(cov) - np.diag(target)) / np.abs(np.diag(target))
    z = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            prod = centered[:, i] * centered[:, j]
            se = prod.std(ddof=1) / math.sqrt(m)
            z[i, j] = z[j, i] = (cov[i, j] - target[i, j]) / se if se > 0 else 0.0
    worst_diag = float(diag_err.max())
    worst_z = float(np.abs(z).max())
    passed = worst_diag <= rel_tol and worst_z <= n_sigma
    return StatReport("covariance", worst_diag, rel_tol, bool(passed), {
        "covariance": cov, "target": target, "diag_rel_err": diag_err,
        "offdiag_z": z, "max_abs_z": worst_z, "n_sigma": n_sigma, "n_samples": m,
    })


def _pair_distance_products(pooled, indicators):
    """Row sums of the distance matrix D and the products D @ indicators."""
    n = pooled.shape[0]
    sq = np.sum(pooled * pooled, axis=1)
    rowsum = np.empty(n)
    prod = np.empty((n, indicators.shape[1]))
    for s in range(0, n, _ROW_CHUNK):
        blk = pooled[s:s + _ROW_CHUNK]
        d2 = sq[s:s + _ROW_CHUNK, None] + sq[None, :] - 2.0 * (blk @ pooled.T)
        dist = np.sqrt(np.maximum(d2, 0.0))
        rows = np.arange(dist.shape[0])
        dist[rows, s + rows] = 0.0
        rowsum[s:s + _ROW_CHUNK] = dist.sum(axis=1)
        prod[s:s + _ROW_CHUNK] = dist @ indicators
    return rowsum, prod


def energy_distance_test(x, y, level: float = 0.05, n_perm: int = N_PERMUTATIONS,
                         seed: int = 0) -> StatReport:
    """Two-sample energy statistic with a seeded permutation p-value.

    statistic = nm/(n+m) * (2 E|X-Y| - E|X-X'| - E|Y-Y'|); the p-value is
    (1 + #{perm >= observed}) / (n_perm + 1). Rejection when p < level.
    All within-group sums come from one pass over the pooled distance matrix.
    """
    xa, ya = as_sample_array(x), as_sample_array(y)
    n, m = xa.shape[0], ya.shape[0]
    if min(n, m) < ENERGY_MIN_SAMPLES:
        raise InsufficientSamples(
            f"energy_distance_test needs at least {ENERGY_MIN_SAMPLES} samples per set, got {n} and {m}")
    pooled = np.vstack([xa, ya])
    N = n + m
    rng = np.random.default_rng(seed)
    labels = np.zeros((N, n_perm + 1))
    labels[:n, 0] = 1.0
    for k in range(1, n_perm + 1):
        labels[rng.permutation(N)[:n], k] = 1.0
    rowsum, Du = _pair_distance_products(pooled, labels)
    total = rowsum.sum()
    s_xx = np.einsum("ik,ik->k", labels, Du)
    s_x_all = labels.T @ rowsum
    s_xy = s_x_all - s_xx
    s_yy = total - 2.0 * s_x_all + s_xx
    stats = (n * m / N) * (2.0 * s_xy / (n * m) - s_xx / n ** 2 - s_yy / m ** 2)
    obs = float(stats[0])
    count = int(np.sum(stats[1:] >= obs))
    p = (1 + count) / (n_perm + 1)
    return StatReport("energy_distance", obs, level, bool(p >= level), {
        "p_value": p, "n_perm": n_perm, "seed": seed, "n_x": n, "n_y": m,
    })
