"""Solver tests: water-filling, cubic roots, fixed-power partition ratios,
the dual grid search, and the Levenberg-Marquardt refiner."""

import numpy as np
import pytest

from rispart.asymptotic import (Allocation, AsymptoticProblem, Solution,
                                rate, validate_allocation)
from rispart.solver import (GridSearchConfig, LmDivergenceError,
                            classify_pattern, cubic_roots, grid_search,
                            kkt_residual, lm_solve, search_bounds, solve,
                            solve_p32, water_filling)


def random_problem(rng, s_max=None, l3=None, power=1.0):
    s_max = s_max if s_max is not None else int(rng.integers(1, 5))
    l3 = l3 if l3 is not None else int(rng.integers(0, 4))
    m_r = np.sort(10.0 ** rng.uniform(-0.5, 3.0, s_max))[::-1]
    m_d = np.sort(10.0 ** rng.uniform(-0.5, 3.0, l3))[::-1]
    return AsymptoticProblem(m_r=m_r, m_d=m_d, power=power)


class TestWaterFilling:
    def test_single_channel(self):
        p, v = water_filling([2.0], 1.0)
        np.testing.assert_allclose(p, [1.0])
        assert abs(v - 2.0 / 3.0) < 1e-12

    def test_equal_channels(self):
        p, v = water_filling([1.0, 1.0], 2.0)
        np.testing.assert_allclose(p, [1.0, 1.0])

    def test_unequal_split(self):
        p, v = water_filling([4.0, 1.0], 1.0)
        np.testing.assert_allclose(p, [0.875, 0.125], atol=1e-12)
        assert abs(v - 8.0 / 9.0) < 1e-12

    def test_weak_channel_shut_off(self):
        p, v = water_filling([10.0, 0.1], 0.5)
        np.testing.assert_allclose(p, [0.5, 0.0], atol=1e-12)
        assert abs(v - 1.0 / 0.6) < 1e-12

    def test_zero_budget(self):
        p, v = water_filling([3.0, 1.0], 0.0)
        np.testing.assert_array_equal(p, [0.0, 0.0])

    def test_budget_and_slackness(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            m = np.sort(10.0 ** rng.uniform(-2, 2, rng.integers(1, 8)))[::-1]
            budget = float(10.0 ** rng.uniform(-2, 2))
            p, v = water_filling(m, budget)
            assert abs(p.sum() - budget) <= 1e-12 * budget
            assert np.all(p >= 0)
            # active channels share the level, inactive sit below it
            active = p > 0
            np.testing.assert_allclose(p[active] + 1.0 / m[active],
                                       1.0 / v, rtol=1e-10)
            assert np.all(1.0 / m[~active] >= 1.0 / v - 1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            water_filling([], 1.0)
        with pytest.raises(ValueError):
            water_filling([1.0, 2.0], 1.0)
        with pytest.raises(ValueError):
            water_filling([1.0], -0.5)


class TestCubicRoots:
    def test_zero_cascaded_total(self):
        roots, valid = cubic_roots(v=2.0, p_r_total=0.0, m=4.0)
        # roots of p^3 - p^2/2 = 0 are {0 (double), 1/2}; only 1/2 is a
        # feasible cascaded power
        finite = roots[~np.isnan(roots)]
        assert np.all((np.abs(finite) < 1e-12)
                      | (np.abs(finite - 0.5) < 1e-12))
        np.testing.assert_allclose(roots[valid], [0.5], atol=1e-12)

    def test_polynomial_residual(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = float(10.0 ** rng.uniform(-2, 2))
            pr = float(10.0 ** rng.uniform(-3, 1))
            m = float(10.0 ** rng.uniform(-1, 3))
            roots, valid = cubic_roots(v, pr, m)
            for x in roots[~np.isnan(roots)]:
                res = x ** 3 - x ** 2 / v + pr ** 2 / m
                scale = max(abs(x) ** 3, pr ** 2 / m, 1e-30)
                assert abs(res) < 1e-9 * scale

    def test_validity_floor(self):
        v, pr, m = 1.0, 0.2, 10.0
        roots, valid = cubic_roots(v, pr, m)
        floor = max(4.0 * v ** 2 * pr ** 2 / m, 0.5 / v)
        assert np.all(roots[valid] >= floor * (1 - 1e-9))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            cubic_roots(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            cubic_roots(1.0, -1.0, 1.0)


class TestSolveP32:
    def test_symmetric_two_paths(self):
        t, w = solve_p32([16.0, 16.0])
        np.testing.assert_allclose(t, [0.5, 0.5], atol=1e-9)
        assert abs(w - 3.2) < 1e-9

    def test_weak_pair_collapses(self):
        t, w = solve_p32([3.0, 2.0])
        np.testing.assert_allclose(t, [1.0, 0.0], atol=1e-12)
        assert abs(w - 1.5) < 1e-12

    def test_matches_dense_scan(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 1.0, 100001)
        for _ in range(50):
            m = np.sort(10.0 ** rng.uniform(-0.5, 3.0, 2))[::-1]
            t, _ = solve_p32(m)
            best = np.sum(np.log2(1 + m * t ** 2))
            scan = (np.log2(1 + m[0] * grid ** 2)
                    + np.log2(1 + m[1] * (1 - grid) ** 2))
            assert best >= scan.max() - 1e-7

    def test_invariants(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            m = np.sort(10.0 ** rng.uniform(-0.5, 3.0,
                                            rng.integers(1, 6)))[::-1]
            t, w = solve_p32(m)
            assert abs(t.sum() - 1.0) < 1e-9
            assert np.all(np.diff(t) <= 1e-12)
            assert w > 0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            solve_p32([1.0, 2.0])
        with pytest.raises(ValueError):
            solve_p32([1.0, -1.0])


class TestSearchBounds:
    def test_with_direct(self):
        b_l, b_u = search_bounds([0], [0], [4.0], [1.0], 1.0)
        assert abs(b_l - 0.5) < 1e-12
        assert abs(b_u - 2.0 / 2.25) < 1e-12

    def test_direct_cap(self):
        b_l, b_u = search_bounds([0], [0], [4.0], [0.2], 1.0)
        assert abs(b_u - 0.2) < 1e-12

    def test_without_direct(self):
        b_l, b_u = search_bounds([0, 1], [], [4.0, 2.0], [], 2.0)
        assert abs(b_l - 0.25) < 1e-12
        assert abs(b_u - 2.0 / (2.0 + 0.25 + 0.5)) < 1e-12

    def test_needs_cascaded(self):
        with pytest.raises(ValueError):
            search_bounds([], [0], [4.0], [1.0], 1.0)


class TestGridSearch:
    def test_single_cascaded_only(self):
        sol = grid_search(AsymptoticProblem(m_r=[16.0], m_d=[], power=1.0))
        np.testing.assert_allclose(sol.allocation.p_r, [1.0], atol=1e-12)
        np.testing.assert_allclose(sol.allocation.t, [1.0], atol=1e-12)
        assert abs(sol.rate - np.log2(17.0)) < 1e-12

    def test_negligible_cascade_reduces_to_water_filling(self):
        prob = AsymptoticProblem(m_r=[1e-9], m_d=[4.0, 1.0], power=1.0)
        sol = grid_search(prob)
        p, _ = water_filling([4.0, 1.0], 1.0)
        expected = np.sum(np.log2(1 + np.array([4.0, 1.0]) * p))
        assert abs(sol.rate - expected) < 1e-6

    def test_feasible_and_ordered(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            prob = random_problem(rng)
            sol = grid_search(prob)
            validate_allocation(prob, sol.allocation)
            assert np.all(np.diff(sol.allocation.p_r) <= 1e-9)
            assert np.all(np.diff(sol.allocation.t) <= 1e-9)

    def test_deterministic(self):
        prob = random_problem(np.random.default_rng(5))
        a = grid_search(prob)
        b = grid_search(prob)
        np.testing.assert_array_equal(a.allocation.p_r, b.allocation.p_r)
        assert a.rate == b.rate


class TestLmSolve:
    def test_cold_start_single_block(self):
        prob = AsymptoticProblem(m_r=[16.0], m_d=[], power=1.0)
        sol, res = lm_solve(prob, [0], [])
        assert abs(sol.rate - np.log2(17.0)) < 1e-9
        assert res.max_abs < 1e-6

    def test_warm_start_matches_grid(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            prob = random_problem(rng)
            g = grid_search(prob)
            if not g.s_active:
                continue
            try:
                sol, _ = lm_solve(prob, g.s_active, g.i_active, g.allocation)
            except LmDivergenceError:
                continue
            validate_allocation(prob, sol.allocation)
            assert sol.rate >= g.rate - 5e-3 * max(1.0, abs(g.rate))

    def test_pattern_membership(self):
        prob = AsymptoticProblem(m_r=[50.0, 40.0], m_d=[], power=1.0)
        sol, _ = lm_solve(prob, [0, 1], [])
        a = sol.allocation
        for s in range(2):
            m_tilde = prob.m_r[s] * a.p_r[s]
            root = np.sqrt(max(1.0 / sol.w ** 2 - 1.0 / m_tilde, 0.0))
            dev = min(abs(a.t[s] - (1.0 / sol.w + root)),
                      abs(a.t[s] - (1.0 / sol.w - root)))
            assert dev < 1e-6

    def test_raises_when_not_converged(self):
        prob = AsymptoticProblem(m_r=[50.0, 40.0], m_d=[30.0], power=1.0)
        with pytest.raises(LmDivergenceError):
            lm_solve(prob, [0, 1], [0], max_iter=1)


class TestKktResidual:
    def analytic_single(self):
        prob = AsymptoticProblem(m_r=[16.0], m_d=[], power=1.0)
        alloc = Allocation(p_r=[1.0], p_d=[], t=[1.0])
        v = 16.0 / 17.0
        w = 32.0 / 17.0
        return prob, Solution(problem=prob, allocation=alloc, v=v, w=w,
                              rate=rate(prob, alloc), s_active=[0],
                              i_active=[])

    def test_exact_point(self):
        prob, sol = self.analytic_single()
        assert kkt_residual(prob, sol).max_abs < 1e-12

    def test_perturbation_detected(self):
        prob, sol = self.analytic_single()
        sol.v *= 1.01
        assert kkt_residual(prob, sol).max_abs > 1e-3


class TestSolve:
    def test_rejects_unknown_method(self):
        prob = AsymptoticProblem(m_r=[4.0], m_d=[], power=1.0)
        with pytest.raises(ValueError):
            solve(prob, method="newton")

    def test_both_at_least_as_good_as_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            prob = random_problem(rng)
            g = solve(prob, method="grid")
            b = solve(prob, method="both")
            assert b.rate >= g.rate - 1e-9 * max(1.0, abs(g.rate))

    def test_lm_method_close_to_grid(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            prob = random_problem(rng)
            g = solve(prob, method="grid")
            l = solve(prob, method="lm")
            assert l.rate >= g.rate - 5e-3 * max(1.0, abs(g.rate))

    def test_ratio_power_relation(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            prob = random_problem(rng)
            sol = solve(prob, method="both")
            p_r_tot = sol.allocation.p_r.sum()
            if p_r_tot > 0:
                np.testing.assert_allclose(
                    sol.allocation.t, sol.allocation.p_r / p_r_tot,
                    atol=1e-6)

    def test_pattern_labels(self):
        sol = solve(AsymptoticProblem(m_r=[3.0, 2.0], m_d=[], power=1.0))
        assert classify_pattern(sol) == ["+", "0"]
        sol = solve(AsymptoticProblem(m_r=[200.0, 180.0], m_d=[],
                                      power=1.0), method="both")
        assert classify_pattern(sol) == ["+", "+"]
