"""Brute-force reference implementations for desk-scale verification.

These oracles evaluate the rate objective exhaustively on barycentric
lattices (exact unit-sum grid points), enumerate every injective path
pairing, and grid the common phases, so the analytical shortcuts in the
solver modules can be validated independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from rispart.asymptotic import (Allocation, AsymptoticProblem, Solution,
                                rate)
from rispart.finite import FiniteEvaluation, _rate_with_psi
from rispart.solver import solve


@dataclass(frozen=True)
class GridSpec:
    """Lattice resolutions (points per simplex dimension) for brute force."""

    t_resolution: int = 16
    p_resolution: int = 16

    def __post_init__(self):
        if self.t_resolution < 8 or self.p_resolution < 8:
            raise ValueError("resolutions must be at least 8")


def simplex_lattice(dim: int, resolution: int) -> np.ndarray:
    """All barycentric lattice points: compositions of ``resolution`` into
    ``dim`` nonnegative parts, scaled to sum exactly to 1."""
    if dim < 1 or resolution < 1:
        raise ValueError("dim and resolution must be positive")

    points = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + [remaining])
            return
        for c in range(remaining + 1):
            rec(prefix + [c], remaining - c, slots - 1)

    rec([], resolution, dim)
    return np.array(points, dtype=float) / resolution


def snap_to_lattice(values: np.ndarray, resolution: int) -> np.ndarray:
    """Nearest unit-sum lattice point (largest-remainder rounding)."""
    values = np.asarray(values, dtype=float)
    shares = values * resolution
    base = np.floor(shares).astype(int)
    short = resolution - base.sum()
    order = np.argsort(-(shares - base), kind="stable")
    base[order[:short]] += 1
    return base / resolution


def brute_force_p3(problem: AsymptoticProblem,
                   grid: GridSpec | None = None,
                   ) -> tuple[float, Allocation]:
    """Exhaustive joint maximization over the ratio and power simplices."""
    grid = grid or GridSpec()
    s, l3 = problem.s_max, problem.l3
    if s > 3 or l3 > 2:
        raise ValueError("oracle limited to S <= 3 and L3 <= 2")
    t_lat = simplex_lattice(s, grid.t_resolution)          # (nt, s)
    p_lat = simplex_lattice(s + l3, grid.p_resolution) * problem.power
    p_r = p_lat[:, :s]                                     # (np, s)
    p_d = p_lat[:, s:]
    # rate on the (nt, np) product grid, vectorized per channel
    total = np.zeros((t_lat.shape[0], p_lat.shape[0]))
    for i in range(s):
        total += np.log2(1.0 + problem.m_r[i]
                         * p_r[:, i][None, :] * t_lat[:, i][:, None] ** 2)
    for i in range(l3):
        total += np.log2(1.0 + problem.m_d[i] * p_d[:, i])[None, :]
    it, ip = np.unravel_index(np.argmax(total), total.shape)
    best = Allocation(p_r=p_r[ip], p_d=p_d[ip], t=t_lat[it])
    return float(total[it, ip]), best


def snap_allocation(problem: AsymptoticProblem, alloc: Allocation,
                    grid: GridSpec | None = None) -> Allocation:
    """Project an allocation onto the oracle lattice (for resolution
    bounds: the oracle maximum is at least the rate of the snapped point).
    """
    grid = grid or GridSpec()
    t = snap_to_lattice(alloc.t, grid.t_resolution)
    p = snap_to_lattice(
        np.concatenate([alloc.p_r, alloc.p_d]) / problem.power,
        grid.p_resolution) * problem.power
    return Allocation(p_r=p[:problem.s_max], p_d=p[problem.s_max:], t=t)


def enumerate_pairings(tx_gains, rx_gains, power: float, scale: float = 1.0,
                       m_d=(), solver=None,
                       ) -> list[tuple[tuple[tuple[int, int], ...], float]]:
    """Solve every injective path pairing to optimality.

    Cascaded coefficients are ``scale * |tx_gain * rx_gain|^2`` per pair.
    Returns (pairing, rate) tuples sorted by rate, best first.
    """
    tx_gains = np.asarray(tx_gains)
    rx_gains = np.asarray(rx_gains)
    l1, l2 = tx_gains.size, rx_gains.size
    if l1 > l2:
        raise ValueError("pass the smaller path set first (swap the roles)")
    s = l1
    if s > 4:
        raise ValueError("pairing enumeration limited to min(L1, L2) <= 4")
    solver = solver or (lambda prob: solve(prob))
    m_d = np.sort(np.asarray(m_d, dtype=float))[::-1] if len(m_d) \
        else np.empty(0)

    table = []
    for vs in permutations(range(l2), s):
        pairs = tuple(zip(range(s), vs))
        m = np.array([scale * abs(tx_gains[u] * rx_gains[v]) ** 2
                      for u, v in pairs])
        order = np.argsort(-m, kind="stable")
        problem = AsymptoticProblem(m_r=m[order], m_d=m_d, power=power,
                                    pairs=[pairs[i] for i in order])
        table.append((pairs, solver(problem).rate))
    table.sort(key=lambda row: -row[1])
    return table


def exhaustive_psi(evaluation: FiniteEvaluation, grid_points: int,
                   ) -> tuple[np.ndarray, float]:
    """Global grid optimum of the common phases for small plans."""
    s = evaluation.plan.s
    if s > 2:
        raise ValueError("exhaustive phase search limited to S <= 2")
    if grid_points < 1:
        raise ValueError("grid_points must be positive")
    if grid_points == 1:
        return evaluation.plan.psi.copy(), evaluation.rate
    grid = np.linspace(0.0, 2.0 * np.pi, grid_points, endpoint=False)
    best_psi = evaluation.plan.psi.copy()
    best_rate = -np.inf
    for combo in product(grid, repeat=s):
        psi = np.array(combo)
        r = _rate_with_psi(evaluation, psi)
        if r > best_rate:
            best_rate = r
            best_psi = psi
    return best_psi, float(best_rate)
