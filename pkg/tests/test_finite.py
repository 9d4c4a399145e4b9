"""Finite-size realization tests: transmit covariance, log-det rate, and
mapping an asymptotic solution onto a physical RIS."""

import numpy as np
import pytest

from rispart.asymptotic import (Allocation, AsymptoticProblem, Solution,
                                coefficients, optimal_pairing, rate)
from rispart.channel import (SimulationConfig, dbm_to_watts, realization_rng,
                             realize_channels, ula_response)
from rispart.finite import (adapt_solution, eigenmode_covariance,
                            logdet_rate, refine_common_phases)
from rispart.solver import solve

P0 = dbm_to_watts(60.1030)


def pipeline(seed=0, m=16, n_x=10, n_y=12, l1=2, l2=2, l3=2, **cfg_kw):
    cfg = SimulationConfig(m_t=m, m_r=m, n_x=n_x, n_y=n_y, l1=l1, l2=l2,
                           l3=l3, power_watts=P0 / (m * m), **cfg_kw)
    re = realize_channels(cfg, realization_rng(seed, 0))
    prob = coefficients(re, optimal_pairing(l1, l2), cfg)
    sol = solve(prob, method="both")
    return cfg, re, prob, sol


class TestEigenmodeCovariance:
    def test_zero_power(self):
        a = np.eye(3, 2, dtype=complex)
        np.testing.assert_array_equal(eigenmode_covariance(a, [0.0, 0.0]),
                                      np.zeros((3, 3)))

    def test_orthonormal_basis_eigenvalues(self):
        a = np.eye(4, 2, dtype=complex)
        q = eigenmode_covariance(a, [2.0, 1.0])
        evals = np.sort(np.linalg.eigvalsh(q))
        np.testing.assert_allclose(evals, [0.0, 0.0, 1.0, 2.0], atol=1e-12)

    def test_trace_equals_power_for_unit_columns(self):
        cfg = SimulationConfig()
        g = cfg.tx_geometry
        rng = np.random.default_rng(0)
        a = np.stack([ula_response(t, g) for t in rng.uniform(0, np.pi, 3)],
                     axis=1)
        p = rng.uniform(0, 2, 3)
        q = eigenmode_covariance(a, p)
        assert abs(np.trace(q).real - p.sum()) < 1e-12 * p.sum()
        np.testing.assert_allclose(q, q.conj().T, atol=1e-15)

    def test_input_validation(self):
        a = np.eye(3, 2, dtype=complex)
        with pytest.raises(ValueError):
            eigenmode_covariance(a, [1.0])
        with pytest.raises(ValueError):
            eigenmode_covariance(a, [1.0, -0.1])


class TestLogdetRate:
    def test_zero_channel(self):
        h = np.zeros((2, 3), dtype=complex)
        assert logdet_rate(h, np.eye(3, dtype=complex), 1.0) == 0.0

    def test_scalar_channel(self):
        h = np.array([[1.0 + 0j]])
        q = np.array([[3.0 + 0j]])
        assert abs(logdet_rate(h, q, 1.0) - 2.0) < 1e-12

    def test_matches_eigenvalue_sum(self):
        rng = np.random.default_rng(1)
        h = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        a = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        q = eigenmode_covariance(a, [1.5, 0.5])
        sigma2 = 0.3
        expected = np.sum(np.log2(
            1 + np.linalg.eigvalsh(h @ q @ h.conj().T).clip(0) / sigma2))
        assert abs(logdet_rate(h, q, sigma2) - expected) < 1e-9

    def test_rejects_indefinite_q(self):
        h = np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            logdet_rate(h, np.diag([1.0, -1.0]).astype(complex), 1.0)


class TestAdaptSolution:
    def test_realized_plan_consistent(self):
        cfg, re, prob, sol = pipeline(seed=1)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(11))
        assert ev.plan.column_counts.sum() == cfg.n_y
        assert ev.plan.s <= len(sol.s_active) or not sol.s_active
        assert ev.rate > 0 and ev.rate_asymptotic > 0
        assert ev.gap == abs(ev.rate - ev.rate_asymptotic) / ev.rate_asymptotic

    def test_deterministic_given_psi(self):
        cfg, re, prob, sol = pipeline(seed=2)
        k = sum(1 for t in sol.allocation.t if t > 0)
        psi = np.linspace(0.5, 1.5, k)
        a = adapt_solution(sol, re, cfg.ris_geometry, psi=psi)
        b = adapt_solution(sol, re, cfg.ris_geometry, psi=psi)
        assert a.rate == b.rate

    def test_covariance_trace_meets_budget(self):
        cfg, re, prob, sol = pipeline(seed=3)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(12))
        assert abs(np.trace(ev.q).real - prob.power) < 1e-6 * prob.power

    def test_drop_triggers_rewaterfill(self):
        cfg, re, prob, sol = pipeline(seed=4)
        # force a ratio too small to earn a column
        eps = 0.5 / cfg.n_y
        t = np.zeros(prob.s_max)
        t[0], t[1] = 1 - eps, eps
        p_r = prob.power * t
        alloc = Allocation(p_r=p_r, p_d=np.zeros(prob.l3), t=t)
        forced = Solution(problem=prob, allocation=alloc, v=1.0, w=1.0,
                          rate=rate(prob, alloc), s_active=[0, 1],
                          i_active=[])
        ev = adapt_solution(forced, re, cfg.ris_geometry,
                            rng=np.random.default_rng(13))
        assert ev.rewaterfilled
        assert ev.plan.s == 1
        assert abs(np.trace(ev.q).real - prob.power) < 1e-6 * prob.power

    def test_gap_moderate_at_small_size(self):
        cfg, re, prob, sol = pipeline(seed=5, n_x=30, n_y=30)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(14))
        assert ev.gap < 0.3

    def test_psi_irrelevant_without_direct_power(self):
        # push the direct hop out of range so only the cascaded link carries
        # power; the common phases then only rotate the one active stream
        cfg, re, prob, sol = pipeline(seed=6, l1=1, l2=1, l3=1, d3=1e9)
        assert np.all(sol.allocation.p_d == 0)
        a = adapt_solution(sol, re, cfg.ris_geometry, psi=np.array([0.3]))
        b = adapt_solution(sol, re, cfg.ris_geometry, psi=np.array([4.0]))
        assert abs(a.rate - b.rate) < 1e-9 * max(a.rate, 1.0)


class TestRefineCommonPhases:
    def test_never_decreases(self):
        cfg, re, prob, sol = pipeline(seed=7)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(15))
        refined = refine_common_phases(ev, sweeps=1, grid_points=16)
        assert refined.rate >= ev.rate

    def test_zero_sweeps_is_identity(self):
        cfg, re, prob, sol = pipeline(seed=8)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(16))
        refined = refine_common_phases(ev, sweeps=0)
        assert refined.rate == ev.rate
        np.testing.assert_array_equal(refined.plan.psi, ev.plan.psi)

    def test_input_validation(self):
        cfg, re, prob, sol = pipeline(seed=9)
        ev = adapt_solution(sol, re, cfg.ris_geometry,
                            rng=np.random.default_rng(17))
        with pytest.raises(ValueError):
            refine_common_phases(ev, grid_points=0)
