import math

import numpy as np
import pytest
from scipy import integrate
from scipy.integrate import solve_ivp

from qsa import sim
from qsa.analytic import Space
from qsa.errors import DomainError
from qsa.quat import Su2Vector, su2_exp, su2_log
from qsa.sim import (Route, SimConfig, radial_step, simulate, simulate_ambient_sphere,
                     simulate_area_direct_flat, simulate_area_timechange, simulate_radial,
                     stochastic_exponential)


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(Space.FLAT, 0, 1.0, 1e-3, 10, 0)
    with pytest.raises(DomainError):
        SimConfig(Space.FLAT, 1, 1.0, -1e-3, 10, 0)
    cfg = SimConfig("hyperbolic", 1, 1.0, 1e-2, 10, 0)
    assert cfg.space is Space.HYPERBOLIC and cfg.n_steps == 100


def test_zero_noise_hyperbolic_matches_ode():
    cfg = SimConfig(Space.HYPERBOLIC, 1, 1.0, 1e-4, 1, 0, r0=0.5)
    path = simulate_radial(cfg, noise_scale=0.0)
    c = 1.5
    sol = solve_ivp(lambda t, r: c / np.tanh(r) + 1.5 * np.tanh(r), (0, 1.0), [0.5], rtol=1e-11, atol=1e-12)
    assert path.r[0, -1] == pytest.approx(sol.y[0, -1], rel=1e-4)


def test_implicit_step_solves_its_equation():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.01, 1.4, 200)
    dw = rng.normal(scale=0.03, size=200)
    h, c = 1e-3, 1.5
    y = radial_step(Space.PROJECTIVE, 1, r, h, dw)
    assert np.allclose(y - c * h / np.tan(y) + 1.5 * h * np.tan(y), r + dw, atol=1e-13)
    y = radial_step(Space.HYPERBOLIC, 1, r, h, dw)
    assert np.allclose(y - c * h / np.tanh(y), r + 1.5 * h * np.tanh(r) + dw, atol=1e-13)


def test_hyperbolic_comparison_bound():
    cfg = SimConfig(Space.HYPERBOLIC, 1, 2.0, 1e-2, 500, 3)
    path = simulate_radial(cfg, record=True)
    lower = cfg.r0 + 1.5 * path.times[None, :] + path.bm
    assert np.all(path.r >= lower - 1e-12)


def test_hyperbolic_transience():
    path = simulate_radial(SimConfig(Space.HYPERBOLIC, 1, 10.0, 1e-2, 2000, 4))
    speed = 2 * 1 - 0.5
    assert np.mean(path.r[:, -1] < 0.5 * speed * 10.0) < 0.01


def test_projective_stationary_moment():
    # invariant law of the projective radius: sin^{4n-1} r cos^3 r dr
    w = lambda r: math.sin(r) ** 3 * math.cos(r) ** 3
    z, _ = integrate.quad(w, 0, math.pi / 2)
    m, _ = integrate.quad(lambda r: math.cos(2 * r) * w(r), 0, math.pi / 2)
    path = simulate_radial(SimConfig(Space.PROJECTIVE, 1, 3.0, 2e-3, 4000, 5))
    vals = np.cos(2 * path.r[:, -1])
    assert abs(vals.mean() - m / z) < 4 * vals.std() / math.sqrt(len(vals))
    assert np.all((path.r > 0) & (path.r < math.pi / 2))


def test_clock_monotone_and_ito_clock_close():
    path = simulate_radial(SimConfig(Space.PROJECTIVE, 1, 0.5, 1e-3, 400, 6), record=True)
    assert np.all(np.diff(path.clock, axis=1) >= 0)
    assert np.all(path.clock_ito >= 0)
    assert abs(path.clock_ito.mean() - path.clock[:, -1].mean()) < 0.1


def test_flat_small_time_variance():
    t, m = 0.05, 20000
    s = simulate_area_direct_flat(SimConfig(Space.FLAT, 1, t, 1e-3, m, 7))
    var = s.a.var(axis=0)
    target = t * t / 2
    assert np.allclose(var, target, rtol=0.06)
    assert np.all(np.abs(s.a.mean(axis=0)) < 4 * math.sqrt(target / m))
    # the implicit radial step halves E r^2 on its first step, so the clock
    # needs dt << t here
    tc = simulate_area_timechange(SimConfig(Space.FLAT, 1, t, 1e-4, 5000, 8))
    assert tc.clock.mean() == pytest.approx(target, rel=0.03)


def test_direct_route_rejects_curved_space():
    with pytest.raises(DomainError):
        simulate_area_direct_flat(SimConfig(Space.HYPERBOLIC, 1, 1.0, 1e-2, 10, 0))
    with pytest.raises(DomainError):
        simulate_ambient_sphere(SimConfig(Space.FLAT, 1, 1.0, 1e-2, 10, 0))


@pytest.mark.parametrize("route,space", [(Route.TIMECHANGE, Space.HYPERBOLIC), (Route.DIRECT, Space.FLAT),
                                         (Route.AMBIENT, Space.PROJECTIVE)])
def test_determinism_across_threads(monkeypatch, route, space):
    cfg = SimConfig(space, 1, 0.05, 1e-2, sim.CHUNK + 300, 11)
    if route is Route.AMBIENT:
        cfg = SimConfig(space, 1, 0.05, 1e-2, 300, 11)
    monkeypatch.setenv("QSA_THREADS", "1")
    a = simulate(cfg, route).a
    monkeypatch.setenv("QSA_THREADS", "4")
    b = simulate(cfg, route).a
    assert np.array_equal(a, b)
    c = simulate(SimConfig(space, 1, 0.05, 1e-2, cfg.n_paths, 12), route).a
    assert not np.array_equal(a, c)


def test_prefix_of_paths_is_stable():
    big = simulate_area_timechange(SimConfig(Space.PROJECTIVE, 1, 0.1, 1e-2, 50, 13)).a
    small = simulate_area_timechange(SimConfig(Space.PROJECTIVE, 1, 0.1, 1e-2, 20, 13)).a
    assert np.array_equal(big[:20], small)


def test_stochastic_exponential():
    assert stochastic_exponential([]).as_array().tolist() == [1.0, 0.0, 0.0, 0.0]
    v = Su2Vector(0.1, -0.2, 0.05)
    g = stochastic_exponential([v] * 10)
    assert np.allclose(g.as_array(), su2_exp(v.scale(10)).as_array(), atol=1e-13)
    assert np.allclose(su2_log(g).as_array(), v.scale(10).as_array(), atol=1e-12)
    g2 = stochastic_exponential([np.array([0.1, -0.2, 0.05])] * 10)
    assert np.allclose(g.as_array(), g2.as_array())


def test_timechange_theta_is_unit():
    s = simulate_area_timechange(SimConfig(Space.HYPERBOLIC, 1, 0.3, 1e-2, 200, 14), with_theta=True)
    assert np.allclose(np.sum(s.theta ** 2, axis=1), 1.0, atol=1e-12)
    flat = simulate_area_timechange(SimConfig(Space.FLAT, 1, 0.3, 1e-2, 20, 14), with_theta=True)
    assert flat.theta is None


def test_ambient_route_stays_horizontal():
    path, s = simulate_ambient_sphere(SimConfig(Space.PROJECTIVE, 1, 0.2, 2e-3, 300, 15))
    assert path.max_verticality < 1e-10
    assert path.max_norm_drift < 1e-3
    assert np.allclose(np.sum(path.q ** 2, axis=(1, 2)), 1.0, atol=1e-12)
    assert s.diagnostics["discrepancy_rms"] < 0.05
    assert np.all(np.isfinite(s.clock)) and s.discarded == 0
