import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periodic_empc.model import BoxConstraints
from periodic_empc.steady_state import (SteadyStateInfeasible, choose_epsilon, dual_value,
                                        fixed_point_nullspace, lifted_radius,
                                        periodic_shift_check, solve_steady_state,
                                        steady_state_set)
from builders import integrator_model, random_model, scalar_model

RICHMOND_MAX = np.array([1.011, 1.095, 0.6, 0.633, 0.807, 0.657])


def test_integrator_steady_state():
    model = integrator_model()
    ss = solve_steady_state(model)
    assert abs(ss.u_s[0]) <= 1e-9
    assert abs(ss.ell_s) <= 1e-9
    assert ss.nullspace_dim == 1
    Xs = steady_state_set(ss, model)
    for x in (-1.0, -0.3, 0.0, 0.99, 1.0):
        assert Xs.contains([x])
    assert not Xs.contains([1.2])
    y, dist = Xs.project([1.5])
    assert y[0] == pytest.approx(1.0, abs=1e-8)
    assert dist == pytest.approx(0.5, abs=1e-8)


def test_integrator_with_epsilon_pins_origin():
    model = integrator_model(eps=0.01)
    ss = solve_steady_state(model)
    assert ss.nullspace_dim == 0
    assert abs(ss.x_s_particular[0]) < 1e-9
    assert abs(ss.u_s[0]) < 1e-9
    Xs = steady_state_set(ss, model)
    assert Xs.contains([0.0]) and not Xs.contains([0.1])


def test_contracting_scalar():
    # l(u) = (u - 1)^2 = u^2 - 2u + 1, x = 0.5 x + u
    model = scalar_model(a=0.5, alpha=[-2.0], offset=1.0, x_box=10.0, u_box=(0.0, 2.0))
    ss = solve_steady_state(model)
    assert ss.u_s[0] == pytest.approx(1.0, abs=1e-8)
    assert ss.x_s_particular[0] == pytest.approx(2.0, abs=1e-8)
    assert ss.ell_s == pytest.approx(0.0, abs=1e-9)
    assert ss.nullspace_dim == 0
    # grid oracle over u: x = 2u must lie in the state box
    u = np.linspace(0, 2, 20001)
    cost = np.where(np.abs(2 * u) <= 10, (u - 1) ** 2, np.inf)
    assert ss.ell_s == pytest.approx(cost.min(), abs=1e-8)


def test_fixed_point_identity():
    rng = np.random.default_rng(0)
    model = random_model(rng)
    ss = solve_steady_state(model)
    lhs = (np.eye(model.ns) - model.F) @ ss.x_s_particular
    assert np.allclose(lhs, model.G @ ss.u_s + model.c, atol=1e-8)
    assert np.all(ss.x_s_particular >= model.s_lb - 1e-9)
    assert np.all(ss.x_s_particular <= model.s_ub + 1e-9)


def test_infeasible_steady_state():
    # x = x + u + 1 needs u = -1 but u >= 0
    model = scalar_model(u_box=(0.0, 1.0), bd=1.0, d=[1.0])
    with pytest.raises(SteadyStateInfeasible, match="infeasible"):
        solve_steady_state(model)


def test_nullspace_of_identity_is_full():
    V, C = fixed_point_nullspace(np.eye(3))
    assert V.shape == (3, 3) and C.shape == (3, 0)
    V, C = fixed_point_nullspace(0.5 * np.eye(3))
    assert V.shape == (3, 0)


class TestEpsilon:
    def test_richmond_numbers(self):
        box = BoxConstraints(-RICHMOND_MAX, RICHMOND_MAX, np.zeros(6), 50 * np.ones(6))
        R = lifted_radius(box, 24)
        assert R == pytest.approx(24 * np.sum(RICHMOND_MAX ** 2))
        assert R == pytest.approx(97.55, abs=0.01)
        assert choose_epsilon(0.1, box, 24) == pytest.approx(0.00102, abs=1e-5)

    def test_small_radius_branch(self):
        box = BoxConstraints([-1.0], [1.0], [-1.0], [1.0])
        assert choose_epsilon(0.3, box, 1) == 0.3

    def test_rejects_nonpositive_gamma(self):
        box = BoxConstraints([-1.0], [1.0], [-1.0], [1.0])
        with pytest.raises(ValueError):
            choose_epsilon(0.0, box, 1)

    @pytest.mark.parametrize("gamma", [0.01, 0.1, 1.0])
    def test_gap_bound_random(self, gamma):
        rng = np.random.default_rng(int(gamma * 1000))
        for _ in range(50):
            model = random_model(rng)
            ss = solve_steady_state(model)
            eps = choose_epsilon(gamma, model.box, model.lifted.T)
            ss_eps = solve_steady_state(model.with_cost(model.cost.with_epsilon(eps)))
            assert ss_eps.ell_s - ss.ell_s <= gamma + 1e-8
            assert ss_eps.ell_s - ss.ell_s >= -1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.booleans())
def test_strong_duality(seed, with_w):
    rng = np.random.default_rng(seed)
    model = random_model(rng, W=0.3 if with_w else 0.0)
    ss = solve_steady_state(model)
    assert dual_value(model, ss.mu) == pytest.approx(ss.ell_s_full, abs=1e-6)


def test_shift_toy_prices():
    base = scalar_model(T=2, alpha=[1.0, 2.0], u_box=(-2.0, 2.0), x_box=3.0)
    swapped = scalar_model(T=2, alpha=[2.0, 1.0], u_box=(-2.0, 2.0), x_box=3.0)
    a, b = solve_steady_state(base), solve_steady_state(swapped)
    assert a.ell_s == pytest.approx(b.ell_s, abs=1e-6)
    assert np.allclose(a.u_s[::-1], b.u_s, atol=1e-6)
    rep = periodic_shift_check(base)
    assert rep.max_cost_deviation <= 1e-6 and rep.cyclic


def test_shift_constant_data_identical():
    model = scalar_model(T=3, alpha=[0.5, 0.5, 0.5], x_box=2.0)
    rep = periodic_shift_check(model)
    assert rep.max_cost_deviation <= 1e-9
    assert rep.max_shift_deviation <= 1e-6


def test_set_soundness_augmented():
    rng = np.random.default_rng(11)
    # integrator dynamics give a nontrivial set; W > 0 forces the augmented model
    model = scalar_model(T=3, alpha=[0.2, -0.1, 0.3], W=0.5, x_box=2.0)
    ss = solve_steady_state(model)
    assert ss.nullspace_dim >= 1
    Xs = steady_state_set(ss, model)
    pts = Xs.sample(20, rng)
    IF = np.eye(model.ns) - model.F
    for s in pts:
        assert np.max(np.abs(IF @ s - model.G @ ss.u_s - model.c)) <= 1e-8
        assert model.stage_cost(s, ss.u_s) == pytest.approx(ss.ell_s, abs=1e-8)
