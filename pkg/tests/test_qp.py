import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from periodic_empc.qp import (NotConvexError, QpError, QpProblem, SolverSettings, Status,
                              check_psd, kkt_residuals, solve_qp,
                              solve_qp_with_fixed_variables)
from oracles import grid_qp_minimum, random_small_qp

EPS = 1e-8


def assert_kkt(p, sol, tol=EPS):
    prim, dual = kkt_residuals(p, sol.x_star, sol.mu_eq, sol.mu_bound)
    assert prim <= tol
    assert dual <= tol
    inner = (sol.x_star > p.lb + EPS) & (sol.x_star < p.ub - EPS)
    assert np.all(np.abs(sol.mu_bound[inner]) <= tol)


def box_qp(H, g, lb, ub, A=None, b=None):
    n = len(g)
    A = np.zeros((0, n)) if A is None else A
    b = np.zeros(0) if b is None else b
    return QpProblem(H, g, A, b, lb, ub)


class TestHandExamples:
    def test_active_upper_bound(self):
        # (u - 1)^2 = u^2 - 2u + 1
        p = QpProblem([[2.0]], [-2.0], np.zeros((0, 1)), [], [-2.0], [0.0], 1.0)
        sol = solve_qp(p)
        assert sol.status is Status.OPTIMAL
        assert sol.x_star[0] == pytest.approx(0.0, abs=1e-10)
        assert sol.mu_bound[0] == pytest.approx(2.0, abs=1e-8)
        assert sol.objective == pytest.approx(1.0, abs=1e-10)

    def test_interior(self):
        sol = solve_qp(box_qp([[2.0]], [0.0], [-1.0], [1.0]))
        assert sol.ok
        assert sol.x_star[0] == pytest.approx(0.0, abs=1e-10)
        assert sol.objective == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.abs(sol.mu_bound) < 1e-10)

    def test_simplex_pair(self):
        p = box_qp(2 * np.eye(2), np.zeros(2), [0, 0], [1, 1], np.ones((1, 2)), [1.0])
        sol = solve_qp(p)
        assert np.allclose(sol.x_star, [0.5, 0.5], atol=1e-9)
        assert sol.mu_eq[0] == pytest.approx(-1.0, abs=1e-8)
        assert sol.objective == pytest.approx(0.5, abs=1e-10)
        # grid along the segment u1 + u2 = 1 at step 1e-4
        t = np.linspace(0, 1, 10001)
        vals = t ** 2 + (1 - t) ** 2
        assert sol.objective == pytest.approx(vals.min(), abs=1e-8)
        assert t[np.argmin(vals)] == pytest.approx(0.5)

    def test_fix_single(self):
        sol = solve_qp_with_fixed_variables(box_qp([[2.0]], [0.0], [-1], [1]), {0: 0.3})
        assert sol.x_star[0] == pytest.approx(0.3, abs=1e-10)
        assert sol.objective == pytest.approx(0.09, abs=1e-10)

    def test_fix_in_pair(self):
        p = box_qp(2 * np.eye(2), np.zeros(2), [0, 0], [1, 1], np.ones((1, 2)), [1.0])
        sol = solve_qp_with_fixed_variables(p, {0: 0.0})
        assert np.allclose(sol.x_star, [0.0, 1.0], atol=1e-9)
        assert sol.objective == pytest.approx(1.0, abs=1e-9)
        assert sol.mu_fixed.shape == (1,)

    def test_fix_outside_bounds(self):
        sol = solve_qp_with_fixed_variables(box_qp([[2.0]], [0.0], [-1], [1]), {0: 2.0})
        assert sol.status is Status.INFEASIBLE
        assert sol.iterations == 0


class TestErrors:
    def test_shape_mismatch(self):
        with pytest.raises(QpError):
            QpProblem(np.eye(2), np.zeros(3), np.zeros((0, 3)), [], -1, 1)

    def test_row_count(self):
        with pytest.raises(QpError, match="rows"):
            QpProblem(np.eye(2), np.zeros(2), np.ones((2, 2)), [1.0], -1, 1)

    def test_asymmetric(self):
        with pytest.raises(QpError, match="symmetric"):
            QpProblem([[1, 1], [0, 1]], np.zeros(2), np.zeros((0, 2)), [], -1, 1)

    def test_crossed_bounds(self):
        with pytest.raises(QpError, match="lb"):
            QpProblem(np.eye(1), [0.0], np.zeros((0, 1)), [], [1.0], [0.0])

    def test_indefinite_names_pivot(self):
        p = box_qp(np.diag([1.0, -1.0]), np.zeros(2), -1, 1)
        with pytest.raises(NotConvexError, match="pivot"):
            solve_qp(p)
        with pytest.raises(NotConvexError):
            check_psd(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestStatus:
    def test_infeasible_equalities(self):
        A = np.array([[1.0, 1.0], [1.0, 1.0]])
        p = box_qp(np.eye(2), np.zeros(2), -1, 1, A, [1.0, -1.0])
        sol = solve_qp(p)
        assert sol.status is Status.INFEASIBLE
        assert np.isfinite(sol.certificate)

    def test_infeasible_box(self):
        p = box_qp(np.eye(2), np.zeros(2), 0, 1, np.ones((1, 2)), [3.0])
        assert solve_qp(p).status is Status.INFEASIBLE

    def test_unbounded(self):
        p = box_qp(np.zeros((2, 2)), [-1.0, 0.0], [-np.inf, -1], [np.inf, 1])
        assert solve_qp(p).status is Status.UNBOUNDED

    def test_iteration_cap(self):
        p = box_qp(np.diag([1.0, 1e-3]), [1.0, -1.0], -1, 1, np.array([[1.0, 2.0]]), [0.3])
        sol = solve_qp(p, SolverSettings(max_iterations=3, polish=False))
        assert sol.status is Status.MAX_ITERATIONS
        assert not sol.ok


class TestOracle:
    @pytest.mark.parametrize("seed", range(40))
    def test_grid_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = random_small_qp(rng)
        sol = solve_qp(p)
        assert sol.ok
        assert_kkt(p, sol)
        assert sol.objective == pytest.approx(grid_qp_minimum(p), abs=1e-4)

    def test_envelope_theorem(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = 4
            M = rng.normal(size=(n, n))
            H = M @ M.T + np.eye(n)
            A = rng.normal(size=(2, n))
            x_feas = rng.uniform(-0.5, 0.5, n)
            p = QpProblem(H, rng.normal(size=n), A, A @ x_feas, -np.ones(n), np.ones(n))
            base = solve_qp(p)
            d = 1e-6 * rng.normal(size=2)
            bumped = solve_qp(QpProblem(H, p.g, A, p.b_eq + d, p.lb, p.ub))
            predicted = -base.mu_eq @ d
            actual = bumped.objective - base.objective
            assert actual == pytest.approx(predicted, rel=1e-3, abs=1e-12)

    def test_warm_start_same_answer(self):
        rng = np.random.default_rng(3)
        p = random_small_qp(rng)
        cold = solve_qp(p)
        warm = solve_qp(p, x0=cold.x_star + 0.01)
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


@st.composite
def convex_qps(draw):
    n = draw(st.integers(1, 5))
    n_eq = draw(st.integers(0, min(2, n - 1) if n > 1 else 0))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    rank_def = draw(st.booleans())
    H = M @ M.T
    if rank_def and n > 1:
        v = rng.normal(size=(n, 1))
        H = H - (H @ v @ v.T @ H) / (v.T @ H @ v).item()  # kill one direction
        H = 0.5 * (H + H.T)
        H += 1e-12 * np.eye(n)
    lb = -rng.uniform(0.5, 2, n)
    ub = rng.uniform(0.5, 2, n)
    A = rng.normal(size=(n_eq, n))
    x_feas = rng.uniform(lb, ub)
    return QpProblem(H, rng.normal(size=n), A, A @ x_feas, lb, ub)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(convex_qps())
def test_kkt_on_random_problems(p):
    sol = solve_qp(p)
    assert sol.status is Status.OPTIMAL
    assert_kkt(p, sol)
    assert sol.objective == pytest.approx(p.objective(sol.x_star), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(convex_qps(), st.data())
def test_fixing_matches_appended_rows(p, data):
    i = data.draw(st.integers(0, p.n - 1))
    first = solve_qp(p)
    val = float(first.x_star[i])
    fixed = solve_qp_with_fixed_variables(p, {i: val})
    assert fixed.ok
    # fixing a variable at its optimal value does not change the optimum value
    assert fixed.objective == pytest.approx(first.objective, abs=1e-7)
    row = np.zeros((1, p.n))
    row[0, i] = 1.0
    appended = solve_qp(QpProblem(p.H, p.g, np.vstack([p.A_eq, row]),
                                  np.append(p.b_eq, val), p.lb, p.ub))
    assert fixed.objective == pytest.approx(appended.objective, abs=1e-9)
