"""Active-set QP solver against hand cases and brute-force oracles."""

import numpy as np
import pytest

from conftest import enumerate_qp_optimum, grid_qp_minimum
from funnel_sqp.errors import DimensionMismatch, MaxPivots
from funnel_sqp.qp import (FREE, LOWER, PINNED, UPPER, QpData, QpSolution,
                           kkt_residual, qp_objective, solve_qp)

INF = np.inf


def box_qp(W, g, lb=None, ub=None, A=None, b=None):
    n = len(g)
    g = np.asarray(g, dtype=float)
    W = np.asarray(W, dtype=float)
    lb = np.full(n, -INF) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, INF) if ub is None else np.asarray(ub, dtype=float)
    if A is None:
        A = np.zeros((n, 0))
        b = np.zeros(0)
    else:
        A = np.asarray(A, dtype=float).reshape(n, -1)
        b = np.atleast_1d(np.asarray(b, dtype=float))
    return QpData(W=W, g=g, A=A, b=b, lb=lb, ub=ub)


def assert_kkt(qp, sol, tol=None):
    if tol is None:
        tol = 1e-8 * (1.0 + np.max(np.abs(qp.g), initial=0.0))
    assert kkt_residual(qp, sol) <= tol


class TestHandCases:
    def test_unconstrained_newton(self):
        qp = box_qp([[2.0, 0.0], [0.0, 4.0]], [-2.0, -8.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 2.0])
        assert np.isclose(sol.objective, -9.0)
        assert_kkt(qp, sol)

    def test_equality_constrained(self):
        # min x^2 + y^2 s.t. x + y = 2 -> x = y = 1, lambda = 2
        qp = box_qp(2.0 * np.eye(2), [0.0, 0.0],
                    A=[[1.0], [1.0]], b=[2.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 1.0])
        assert np.allclose(sol.lam, [2.0])
        assert np.allclose(sol.mu, np.zeros(2), atol=1e-12)
        assert_kkt(qp, sol)

    def test_active_bound_multiplier_sign(self):
        # min (x+2)^2 on [-1, 1]: lower bound active, mu = grad > 0
        qp = box_qp([[2.0]], [4.0], lb=[-1.0], ub=[1.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.isclose(sol.x[0], -1.0)
        assert sol.mu[0] > 0.0
        assert sol.active[0] == LOWER
        assert_kkt(qp, sol)

    def test_pinned_variable(self):
        qp = box_qp(np.eye(2), [1.0, 1.0], lb=[0.5, -2.0], ub=[0.5, 2.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert sol.x[0] == 0.5
        assert sol.active[0] == PINNED
        assert np.isclose(sol.x[1], -1.0)
        assert_kkt(qp, sol)

    def test_infeasible_equality_vs_box(self):
        # x + y = 10 cannot hold inside [0,1]^2
        qp = box_qp(np.eye(2), [0.0, 0.0], lb=[0.0, 0.0], ub=[1.0, 1.0],
                    A=[[1.0], [1.0]], b=[10.0])
        sol = solve_qp(qp)
        assert sol.status == "infeasible"
        assert sol.objective == INF

    def test_unbounded_linear(self):
        qp = box_qp(np.zeros((2, 2)), [1.0, -1.0], lb=[0.0, 0.0])
        sol = solve_qp(qp)
        assert sol.status == "unbounded"
        assert sol.objective == -INF

    def test_unbounded_negative_curvature(self):
        qp = box_qp([[-2.0]], [0.0])
        sol = solve_qp(qp)
        assert sol.status == "unbounded"

    def test_negative_curvature_boxed_global(self):
        # min -x^2 on [-1, 2]: both endpoints are local; tie-break finds -4
        qp = box_qp([[-2.0]], [0.0], lb=[-1.0], ub=[2.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert sol.objective <= -4.0 + 1e-9

    def test_zero_curvature_flat_objective(self):
        qp = box_qp(np.zeros((1, 1)), [0.0], lb=[-1.0], ub=[1.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.isclose(sol.objective, 0.0)

    def test_empty_box_rejected(self):
        qp = box_qp(np.eye(1), [0.0], lb=[1.0], ub=[0.0])
        with pytest.raises(DimensionMismatch):
            solve_qp(qp)

    def test_objective_helper(self):
        qp = box_qp([[2.0]], [3.0])
        assert qp_objective(qp, np.array([2.0])) == 0.5 * 2 * 4 + 6.0


class TestRankDeficiency:
    def test_duplicate_row_consistent(self):
        # the same plane twice; second multiplier reported as zero
        A = np.array([[1.0, 2.0], [1.0, 2.0]])
        qp = box_qp(2.0 * np.eye(2), [0.0, 0.0], A=A, b=[2.0, 4.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 1.0])
        assert np.isclose(sol.lam[0] + 2.0 * sol.lam[1], 2.0)
        assert np.count_nonzero(sol.lam) <= 1
        assert_kkt(qp, sol)

    def test_duplicate_row_inconsistent(self):
        A = np.array([[1.0, 2.0], [1.0, 2.0]])
        qp = box_qp(2.0 * np.eye(2), [0.0, 0.0], A=A, b=[2.0, 5.0])
        sol = solve_qp(qp)
        assert sol.status == "infeasible"

    def test_zero_row_consistent(self):
        qp = box_qp(np.eye(1), [0.0], A=[[0.0]], b=[0.0])
        sol = solve_qp(qp)
        assert sol.status == "optimal"
        assert np.isclose(sol.x[0], 0.0)

    def test_zero_row_inconsistent(self):
        qp = box_qp(np.eye(1), [0.0], A=[[0.0]], b=[1.0])
        sol = solve_qp(qp)
        assert sol.status == "infeasible"


class TestStarts:
    def test_feasible_start_skips_phase1(self):
        qp = box_qp(2.0 * np.eye(2), [0.0, 0.0],
                    lb=[-5.0, -5.0], ub=[5.0, 5.0],
                    A=[[1.0], [1.0]], b=[2.0])
        sol = solve_qp(qp, feasible_start=np.array([2.0, 0.0]))
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 1.0])

    def test_warm_start_resolve_few_pivots(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            M = rng.standard_normal((n, n))
            W = M @ M.T + 0.5 * np.eye(n)
            g = rng.standard_normal(n)
            lb = np.full(n, -2.0)
            ub = np.full(n, 2.0)
            A = rng.standard_normal((n, 1))
            x_feas = rng.uniform(-1.0, 1.0, size=n)
            b = A.T @ x_feas
            qp = QpData(W=W, g=g, A=A, b=b, lb=lb, ub=ub)
            cold = solve_qp(qp)
            assert cold.status == "optimal"
            warm = solve_qp(qp, warm_start=cold.active)
            assert warm.status == "optimal"
            assert np.isclose(warm.objective, cold.objective, atol=1e-9)
            assert warm.n_pivots <= 2

    def test_warm_start_wrong_set_still_correct(self):
        qp = box_qp(2.0 * np.eye(2), [-2.0, -2.0],
                    lb=[0.0, 0.0], ub=[3.0, 3.0])
        bad_codes = np.array([UPPER, UPPER], dtype=np.int8)
        sol = solve_qp(qp, warm_start=bad_codes)
        assert sol.status == "optimal"
        assert np.allclose(sol.x, [1.0, 1.0])

    def test_pivot_budget_exhaustion(self):
        qp = box_qp([[2.0]], [4.0], lb=[-1.0], ub=[1.0])
        with pytest.raises(MaxPivots):
            solve_qp(qp, feasible_start=np.array([1.0]), max_pivots=0)


class TestOracleBattery:
    def test_convex_matches_enumeration(self):
        rng = np.random.default_rng(100)
        for _ in range(60):
            n = int(rng.integers(1, 6))
            m = int(rng.integers(0, 3))
            M = rng.standard_normal((n, n))
            W = M @ M.T + 0.3 * np.eye(n)
            g = rng.standard_normal(n) * 2.0
            lb = rng.uniform(-4.0, -0.5, size=n)
            ub = rng.uniform(0.5, 4.0, size=n)
            A = rng.standard_normal((n, m))
            x_feas = rng.uniform(lb, ub)
            b = A.T @ x_feas if m else np.zeros(0)
            qp = QpData(W=W, g=g, A=A, b=b, lb=lb, ub=ub)
            sol = solve_qp(qp)
            assert sol.status == "optimal"
            ref, _ = enumerate_qp_optimum(W, g, A, b, lb, ub)
            assert abs(sol.objective - ref) <= 1e-8 * (1.0 + abs(ref))
            assert_kkt(qp, sol)

    def test_indefinite_beats_grid(self):
        rng = np.random.default_rng(200)
        for _ in range(40):
            n = int(rng.integers(1, 5))
            W = rng.standard_normal((n, n))
            W = 0.5 * (W + W.T)
            g = rng.standard_normal(n)
            lb = rng.uniform(-3.0, -0.5, size=n)
            ub = rng.uniform(0.5, 3.0, size=n)
            qp = QpData(W=W, g=g, A=np.zeros((n, 0)), b=np.zeros(0),
                        lb=lb, ub=ub)
            sol = solve_qp(qp)
            assert sol.status == "optimal"
            ref = grid_qp_minimum(W, g, lb, ub)
            assert sol.objective <= ref + 1e-6
            assert_kkt(qp, sol, tol=1e-7 * (1.0 + np.max(np.abs(g))))

    def test_equalities_hold_exactly(self):
        rng = np.random.default_rng(300)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, min(n, 3)))
            M = rng.standard_normal((n, n))
            W = M @ M.T + 0.5 * np.eye(n)
            g = rng.standard_normal(n)
            A = rng.standard_normal((n, m))
            x_feas = rng.uniform(-1.0, 1.0, size=n)
            b = A.T @ x_feas
            qp = QpData(W=W, g=g, A=A, b=b,
                        lb=np.full(n, -INF), ub=np.full(n, INF))
            sol = solve_qp(qp)
            assert sol.status == "optimal"
            assert np.max(np.abs(A.T @ sol.x - b)) <= 1e-8 * (
                1.0 + np.max(np.abs(b)))

    def test_solution_type(self):
        sol = solve_qp(box_qp(np.eye(1), [0.0]))
        assert isinstance(sol, QpSolution)
        assert sol.active.dtype == np.int8
        assert sol.active[0] == FREE
