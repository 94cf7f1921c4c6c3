"""Quaternion and su(2) helpers.

Quaternions are stored as float arrays whose last axis is (re, i, j, k).
The array functions broadcast over leading axes; the small dataclasses
wrap single values for the public API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import AntipodalInput, DivisionByZero, DomainError

RENORM_EVERY = 64
_SMALL_ANGLE = 1e-8
_ANTIPODAL_TOL = 1e-12


def qmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    b0, b1, b2, b3 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ], axis=-1)


def qconj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm2(a):
    a = np.asarray(a, dtype=float)
    return np.sum(a * a, axis=-1)


def qinv(a):
    n2 = qnorm2(a)
    if np.any(n2 == 0.0):
        raise DivisionByZero("inverse of the zero quaternion")
    return qconj(a) / n2[..., None]


def unit_left_mul(a, unit):
    """Left multiply the quaternion array ``a`` by I, J or K (unit = 1, 2, 3).

    Cheaper than qmul since it is a signed permutation of components.
    """
    a0, a1, a2, a3 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    if unit == 1:
        return np.stack([-a1, a0, -a3, a2], axis=-1)
    if unit == 2:
        return np.stack([-a2, a3, a0, -a1], axis=-1)
    if unit == 3:
        return np.stack([-a3, -a2, a1, a0], axis=-1)
    raise ValueError("unit must be 1, 2 or 3")


def su2_exp_array(v):
    """exp of pure-imaginary vectors v (..., 3) -> unit quaternions (..., 4)."""
    v = np.asarray(v, dtype=float)
    eta = np.sqrt(np.sum(v * v, axis=-1))
    small = eta < _SMALL_ANGLE
    safe = np.where(small, 1.0, eta)
    sinc = np.where(small, 1.0 - eta * eta / 6.0, np.sin(safe) / safe)
    out = np.empty(v.shape[:-1] + (4,))
    out[..., 0] = np.cos(eta)
    out[..., 1:] = v * sinc[..., None]
    return out


def su2_log_array(u):
    """Principal log of unit quaternions (..., 4) -> vectors (..., 3) with norm <= pi."""
    u = np.asarray(u, dtype=float)
    if np.any(u[..., 0] <= -1.0 + _ANTIPODAL_TOL):
        raise AntipodalInput("log is not unique at -1")
    vec = u[..., 1:]
    s = np.sqrt(np.sum(vec * vec, axis=-1))
    eta = np.arctan2(s, u[..., 0])
    small = s < _SMALL_ANGLE
    safe = np.where(small, 1.0, s)
    # eta / sin(eta) with sin(eta) = s for unit input; expand near 0
    ratio = np.where(small, 1.0 + eta * eta / 6.0, eta / safe)
    return vec * ratio[..., None]


def renormalize(u):
    u = np.asarray(u, dtype=float)
    return u / np.sqrt(qnorm2(u))[..., None]


def stochastic_exponential(increments, start=None):
    """Ordered product prod_k exp(dv_k) for increments of shape (steps, ..., 3).

    The running product is renormalized every RENORM_EVERY factors.
    """
    inc = np.asarray(increments, dtype=float)
    if start is None:
        g = np.zeros(inc.shape[1:-1] + (4,))
        g[..., 0] = 1.0
    else:
        g = np.array(start, dtype=float)
    for k in range(inc.shape[0]):
        g = qmul(g, su2_exp_array(inc[k]))
        if (k + 1) % RENORM_EVERY == 0:
            g = renormalize(g)
    return renormalize(g)


@dataclass(frozen=True)
class Quaternion:
    t: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.x, self.y, self.z])

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return Quaternion.from_array(qmul(self.as_array(), other.as_array()))
        return Quaternion.from_array(self.as_array() * other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __add__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(self.as_array() + other.as_array())

    def __sub__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(self.as_array() - other.as_array())

    def conj(self) -> "Quaternion":
        return Quaternion(self.t, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.t ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2)

    def inverse(self) -> "Quaternion":
        return Quaternion.from_array(qinv(self.as_array()))

    def imag(self) -> "Su2Vector":
        return Su2Vector(self.x, self.y, self.z)


@dataclass(frozen=True)
class Su2Vector:
    """Element of su(2), the pure quaternion vI*I + vJ*J + vK*K."""

    vI: float = 0.0
    vJ: float = 0.0
    vK: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Su2Vector":
        a = np.asarray(a, dtype=float).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.vI, self.vJ, self.vK])

    def norm(self) -> float:
        return math.sqrt(self.vI ** 2 + self.vJ ** 2 + self.vK ** 2)

    def dot(self, other: "Su2Vector") -> float:
        return self.vI * other.vI + self.vJ * other.vJ + self.vK * other.vK

    def __add__(self, other):
        return Su2Vector.from_array(self.as_array() + other.as_array())

    def __neg__(self):
        return Su2Vector(-self.vI, -self.vJ, -self.vK)

    def scale(self, c: float) -> "Su2Vector":
        return Su2Vector(c * self.vI, c * self.vJ, c * self.vK)


@dataclass(frozen=True)
class SU2Element:
    """Unit quaternion; products renormalize after RENORM_EVERY steps."""

    q: tuple = (1.0, 0.0, 0.0, 0.0)
    steps: int = field(default=0, compare=False)

    @classmethod
    def from_array(cls, a, steps: int = 0) -> "SU2Element":
        a = np.asarray(a, dtype=float)
        return cls(tuple(float(x) for x in a), steps)

    def as_array(self) -> np.ndarray:
        return np.array(self.q)

    def __mul__(self, other: "SU2Element") -> "SU2Element":
        prod = qmul(self.as_array(), other.as_array())
        steps = self.steps + other.steps + 1
        if steps >= RENORM_EVERY:
            prod = renormalize(prod)
            steps = 0
        return SU2Element.from_array(prod, steps)

    def inverse(self) -> "SU2Element":
        return SU2Element.from_array(qconj(self.as_array()), self.steps)

    def defect(self) -> float:
        return abs(float(qnorm2(self.as_array())) - 1.0)


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    return a * b


def su2_exp(v: Su2Vector) -> SU2Element:
    return SU2Element.from_array(su2_exp_array(v.as_array()))


def su2_log(u: SU2Element) -> Su2Vector:
    return Su2Vector.from_array(su2_log_array(renormalize(u.as_array())))


def inhomogeneous_coords(q) -> np.ndarray:
    """Map homogeneous quaternion coordinates (n+1, 4) to w_i = q_{n+1}^{-1} q_i."""
    q = np.asarray(q, dtype=float)
    last = q[..., -1, :]
    if np.any(np.sqrt(qnorm2(last)) < 1e-14):
        raise DivisionByZero("last homogeneous coordinate vanishes")
    return qmul(qinv(last)[..., None, :], q[..., :-1, :])


def cylindrical_to_sphere(w, theta) -> np.ndarray:
    """Point of S^{4n+3} from affine coordinates w (n, 4) and fiber vector theta."""
    w = np.asarray(w, dtype=float)
    g = su2_exp_array(np.asarray(theta, dtype=float))
    scale = 1.0 / math.sqrt(1.0 + float(np.sum(w * w)))
    top = qmul(g[None, :], w) * scale
    return np.vstack([top, g[None, :] * scale])


def cylindrical_to_hyperboloid(w, theta) -> np.ndarray:
    """Point of the anti-de Sitter quadric from w (|w| < 1) and fiber vector theta."""
    w = np.asarray(w, dtype=float)
    rho2 = float(np.sum(w * w))
    if rho2 >= 1.0:
        raise DomainError("affine coordinates must lie in the open unit ball")
    g = su2_exp_array(np.asarray(theta, dtype=float))
    scale = 1.0 / math.sqrt(1.0 - rho2)
    top = qmul(g[None, :], w) * scale
    return np.vstack([top, g[None, :] * scale])
