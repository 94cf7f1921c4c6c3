import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e
from scipy import integrate, special

from qsa.errors import DomainError
from qsa.specfun import (bessel_i_half, bessel_k2, bessel_k2_scaled, gauss_2f1_terminating,
                         hermite_poly, jacobi_poly, jacobi_table, log_gamma, pochhammer,
                         q2m_poly, q2m_radial_table)

# mpmath at 30 digits
LOG_GAMMA_HALF = 0.572364942924700087
K2_AT_1 = 1.62483889863517748
BESSEL_I = {
    (0, 0.1): 2.53575870118741243, (0, 1.0): 1.23120021459296745, (0, 5.0): 26.4799517643059507,
    (3, 0.1): 1.68329017348885352e-4, (3, 1.0): 0.0570989092030482474, (3, 5.0): 13.7668821386825826,
    (6, 0.1): 2.42818962901459861e-10, (6, 1.0): 7.97584358338078694e-5, (6, 5.0): 1.32942379428402521,
}


def test_log_gamma():
    assert log_gamma(1.0) == 0.0 and log_gamma(2.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(LOG_GAMMA_HALF, abs=1e-14)
    assert log_gamma(10.0) == pytest.approx(math.log(362880), abs=1e-12)
    for x in (1e-3, 0.7, 33.3, 1e3):
        assert log_gamma(x) == pytest.approx(special.gammaln(x), abs=1e-12)
    with pytest.raises(DomainError):
        log_gamma(0.0)


def test_pochhammer():
    assert pochhammer(3.7, 0) == 1.0
    assert pochhammer(2.0, 3) == 24.0
    assert pochhammer(0.5, 4) == 6.5625
    assert pochhammer(-2.0, 5) == 0.0
    big = pochhammer(50.0, 150)
    assert big == pytest.approx(special.poch(50.0, 150), rel=1e-12)


def test_jacobi_low_degree_and_scipy():
    assert jacobi_poly(0, 0.3, 1.2, 0.4) == 1.0
    for x in (-0.9, 0.0, 0.35):
        assert jacobi_poly(1, 1.0, 1.0, x) == pytest.approx(2 * x, abs=1e-15)
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.uniform(-0.9, 6, size=2)
        x = rng.uniform(-1, 1)
        j = int(rng.integers(0, 40))
        assert jacobi_poly(j, a, b, x) == pytest.approx(special.eval_jacobi(j, a, b, x), rel=1e-10, abs=1e-12)


def test_jacobi_value_at_one():
    rng = np.random.default_rng(6)
    for _ in range(10):
        a, b = rng.uniform(-0.9, 5, size=2)
        vals = jacobi_table(20, a, b, 1.0)
        for j in range(21):
            assert vals[j] == pytest.approx(pochhammer(a + 1, j) / math.factorial(j), rel=1e-10)


def test_jacobi_symmetry():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, size=30)
    a, b = 1.5, 2.25
    lhs = jacobi_table(30, a, b, -x)
    rhs = jacobi_table(30, b, a, x) * ((-1.0) ** np.arange(31))[:, None]
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_jacobi_orthogonality():
    a, b = 1.0, 2.5
    for j in range(9):
        for k in range(j):
            f = lambda x: jacobi_poly(j, a, b, x) * jacobi_poly(k, a, b, x) * (1 - x) ** a * (1 + x) ** b
            val, _ = integrate.quad(f, -1, 1, epsabs=1e-12)
            assert abs(val) < 1e-8


def test_hermite():
    assert hermite_poly(0, 1.7) == 1.0
    assert hermite_poly(1, 1.7) == 1.7
    for x in (-2.0, 0.3, 1.1):
        assert hermite_poly(2, x) == pytest.approx(x * x - 1)
        coef = np.zeros(12)
        coef[11] = 1
        assert hermite_poly(11, x) == pytest.approx(hermite_e.hermeval(x, coef), rel=1e-12)


def test_hermite_even_bound():
    for x in np.linspace(-6, 6, 61):
        for j in range(10):
            bound = math.exp(x * x / 4) * 4 ** j * math.factorial(j)
            assert abs(hermite_poly(2 * j, x)) <= bound


def test_bessel_half_integer_closed_forms():
    u = 1.0
    assert bessel_i_half(0, u) == pytest.approx(math.sqrt(2 / (math.pi * u)) * math.cosh(u), rel=1e-14)
    assert bessel_i_half(1, u) == pytest.approx(math.sqrt(2 / (math.pi * u)) * math.sinh(u), rel=1e-14)
    for (m, x), ref in BESSEL_I.items():
        assert bessel_i_half(m, x) == pytest.approx(ref, rel=1e-10)


def test_bessel_recurrence_and_bound():
    for u in (0.1, 1.0, 5.0, 20.0):
        for m in range(1, 7):
            nu = m - 0.5
            lhs = bessel_i_half(m - 1, u) - bessel_i_half(m + 1, u)
            assert lhs == pytest.approx(2 * nu / u * bessel_i_half(m, u), rel=1e-9)
            bound = (u / 2) ** (m - 0.5) * math.exp(u) / math.gamma(m + 0.5)
            assert bessel_i_half(m, u) <= bound
    with pytest.raises(DomainError):
        bessel_i_half(2, 0.0)


def test_bessel_k2():
    assert bessel_k2(1.0) == pytest.approx(K2_AT_1, rel=1e-12)
    v = 100.0
    assert bessel_k2(v) / (math.sqrt(math.pi / (2 * v)) * math.exp(-v)) == pytest.approx(1, abs=0.02)
    grid = np.linspace(1e-3, 50, 400)
    vals = np.array([bessel_k2(x) for x in grid])
    assert np.all(vals > 0) and np.all(np.diff(vals) < 0)
    assert bessel_k2(800.0) == 0.0
    assert bessel_k2_scaled(800.0) > 0
    with pytest.raises(DomainError):
        bessel_k2(0.0)


def test_2f1_terminating():
    assert gauss_2f1_terminating(0, 2.0, 3.0, 0.4) == 1.0
    # 2F1(-(mu+1), mu+1; 1/2; (1 - cosh u)/2) = cosh((mu+1) u) with mu + 1 = 2
    u = 0.7
    val = gauss_2f1_terminating(-2, 2.0, 0.5, (1 - math.cosh(u)) / 2)
    assert val == pytest.approx(math.cosh(2 * u), rel=1e-14)
    with pytest.raises(DomainError):
        gauss_2f1_terminating(-3, 1.0, -1.0, 0.5)


@pytest.mark.parametrize("j", range(7))
def test_2f1_at_one_reduces_to_jacobi(j):
    n, mu = 1, 0.8
    a, b = 2 * n + 1 + mu / 2, mu / 2 - 1
    lhs = gauss_2f1_terminating(-j, j + 2 * n + mu + 1, 2 * n + 2 + mu / 2, 1.0)
    rhs = math.factorial(j) / pochhammer(2 * n + 2 + mu / 2, j) * special.eval_jacobi(j, a, b, -1.0)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def test_q2m_basic():
    v = np.array([0.3, -0.2, 1.1])
    assert q2m_poly(0, v, 0.7) == 1.0
    assert q2m_poly(1, np.zeros(3), 0.7) == pytest.approx(-3 / 0.7)
    t = 0.7
    assert q2m_poly(1, v, t) == pytest.approx(np.dot(v, v) / t ** 2 - 3 / t, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_q2m_depends_on_radius_only(t, a, b, c):
    v = np.array([a, b, c])
    rho = float(np.linalg.norm(v))
    table = q2m_radial_table(4, rho, t)
    for m in range(5):
        scale = math.factorial(m) * 4 ** m / t ** m
        ref = q2m_poly(m, v, t)
        assert table[m] * scale == pytest.approx(ref, rel=1e-9, abs=1e-9 * scale)


def test_q2m_bound():
    rng = np.random.default_rng(8)
    for _ in range(50):
        v = rng.normal(scale=2, size=3)
        t = rng.uniform(0.2, 3)
        for m in range(6):
            bound = math.factorial(m) * 4 ** m / t ** m * math.exp(v @ v / (4 * t)) * (m + 1) * (m + 2) / 2
            assert abs(q2m_poly(m, v, t)) <= bound
