import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsa.errors import AntipodalInput, DivisionByZero
from qsa.quat import (Quaternion, SU2Element, Su2Vector, cylindrical_to_hyperboloid,
                      cylindrical_to_sphere, inhomogeneous_coords, qmul, qnorm2, quat_mul,
                      su2_exp, su2_exp_array, su2_log, su2_log_array)

I = Quaternion(0, 1, 0, 0)
J = Quaternion(0, 0, 1, 0)
K = Quaternion(0, 0, 0, 1)

finite = st.floats(-10, 10, allow_nan=False)
quats = st.builds(Quaternion, finite, finite, finite, finite)


def close(a: Quaternion, b: Quaternion, tol=1e-12):
    return np.allclose(a.as_array(), b.as_array(), atol=tol, rtol=0)


def test_identity_and_units():
    q = Quaternion(0.3, -1.2, 2.0, 0.5)
    assert quat_mul(Quaternion(1), q) == q
    assert close(I * J, K) and close(J * K, I) and close(K * I, J)
    assert close(J * I, Quaternion(0, 0, 0, -1))
    for u in (I, J, K):
        assert close(u * u, Quaternion(-1))


def test_norm_multiplicative_many_pairs():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(10_000, 4))
    b = rng.normal(size=(10_000, 4))
    lhs = np.sqrt(qnorm2(qmul(a, b)))
    rhs = np.sqrt(qnorm2(a) * qnorm2(b))
    assert np.max(np.abs(lhs / rhs - 1)) < 1e-12


@given(quats, quats, quats)
def test_associative_and_distributive(a, b, c):
    scale = 1 + a.norm() * b.norm() * c.norm()
    assert np.allclose(((a * b) * c).as_array(), (a * (b * c)).as_array(), atol=1e-12 * scale)
    assert np.allclose((a * (b + c)).as_array(), (a * b + a * c).as_array(), atol=1e-12 * scale)


@given(quats)
def test_conjugate_product_is_norm(q):
    prod = q.conj() * q
    n2 = q.norm() ** 2
    assert np.allclose(prod.as_array(), [n2, 0, 0, 0], atol=1e-12 * max(1.0, n2))


def test_exp_special_values():
    assert su2_exp(Su2Vector()) == SU2Element()
    u = su2_exp(Su2Vector(math.pi, 0, 0)).as_array()
    assert np.allclose(u, [-1, 0, 0, 0], atol=1e-15)


def test_exp_small_angle_branch_is_smooth():
    v = np.array([3e-9, -2e-9, 1e-9])
    u = su2_exp_array(v)
    assert np.allclose(u[1:], v, rtol=1e-15)
    assert abs(np.sum(u * u) - 1) < 1e-15


def test_exp_inverse():
    rng = np.random.default_rng(2)
    for v in rng.normal(scale=2.0, size=(50, 3)):
        p = su2_exp(Su2Vector.from_array(v)) * su2_exp(Su2Vector.from_array(-v))
        assert np.allclose(p.as_array(), [1, 0, 0, 0], atol=1e-12)


def test_exp_homomorphism_on_commuting_inputs():
    v = Su2Vector(0.3, -0.4, 1.1)
    for s, r in [(0.2, 0.7), (-1.3, 0.4), (2.0, 1.5)]:
        lhs = su2_exp(v.scale(s)) * su2_exp(v.scale(r))
        assert np.allclose(lhs.as_array(), su2_exp(v.scale(s + r)).as_array(), atol=1e-11)


def test_log_round_trip():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(500, 3))
    eta = np.linalg.norm(v, axis=1)
    v = v / eta[:, None] * rng.uniform(0, math.pi - 0.1, size=500)[:, None]
    back = su2_log_array(su2_exp_array(v))
    assert np.max(np.abs(back - v)) < 1e-10
    assert su2_log(SU2Element()) == Su2Vector()


def test_log_antipode_rejected():
    with pytest.raises(AntipodalInput):
        su2_log(SU2Element((-1.0, 0.0, 0.0, 0.0)))


def test_group_product_keeps_unit_norm():
    g = SU2Element()
    step = su2_exp(Su2Vector(0.01, 0.02, -0.015))
    for _ in range(1000):
        g = g * step
        assert g.defect() < 1e-10
    expected = su2_exp(Su2Vector(10.0, 20.0, -15.0))
    assert np.allclose(g.as_array(), expected.as_array(), atol=1e-10)


def test_inhomogeneous_coords():
    north = np.zeros((3, 4))
    north[-1, 0] = 1.0
    assert np.allclose(inhomogeneous_coords(north), 0.0)
    p = np.array([[0.1, 0.2, -0.3, 0.4], [1.0, 0.0, 2.0, -1.0]])
    q = np.vstack([p, [1.0, 0, 0, 0]])
    assert np.allclose(inhomogeneous_coords(q), p, atol=1e-15)
    with pytest.raises(DivisionByZero):
        inhomogeneous_coords(np.vstack([p, np.zeros(4)]))


def test_cylindrical_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(20):
        w = rng.normal(size=(2, 4))
        theta = rng.normal(size=3)
        X = cylindrical_to_sphere(w, theta)
        assert abs(np.sum(X * X) - 1.0) < 1e-12
        assert np.allclose(inhomogeneous_coords(X), w, atol=1e-12)
        wb = 0.4 * w / np.linalg.norm(w)
        Y = cylindrical_to_hyperboloid(wb, theta)
        assert np.allclose(inhomogeneous_coords(Y), wb, atol=1e-12)


def test_constant_driver_solves_left_invariant_ode():
    v = np.array([0.2, -0.1, 0.3])
    dt, steps = 1e-3, 2000
    g = SU2Element()
    step = SU2Element.from_array(su2_exp_array(v * dt))
    for _ in range(steps):
        g = g * step
    assert np.allclose(g.as_array(), su2_exp_array(v * dt * steps), atol=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_imag_part_is_su2_vector(v):
    q = Quaternion(0.5, *v)
    assert q.imag().as_array().tolist() == list(v)
