"""Solution machinery for the asymptotic power/partition problem.

The problem separates, at a KKT point, into a water-filling power step and
a partition-ratio step whose candidates follow a small family of patterns
(zero, plus-root, or minus-root per sub-surface).  The full joint optimum
is found by a 1D grid search over the power dual v: for each candidate
activated set, every grid value of v yields the direct-path powers in
closed form and the cascaded powers as roots of a cubic, and the power
budget selects the consistent points.  A Levenberg-Marquardt root finder
on the same nonlinear system is provided as an alternative/polish step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from rispart.asymptotic import Allocation, AsymptoticProblem, Solution, rate


class LmDivergenceError(RuntimeError):
    """Raised when the Levenberg-Marquardt iteration stops making progress."""


@dataclass(frozen=True)
class GridSearchConfig:
    """Grid step for the dual search and the budget-accuracy tolerance.

    ``grid_size`` of ``None`` resolves to 1/2000 of each search interval.
    """

    grid_size: float | None = None
    acc_tol: float = 1e-3

    def __post_init__(self):
        if self.grid_size is not None and self.grid_size <= 0:
            raise ValueError("grid size must be positive")
        if self.acc_tol <= 0:
            raise ValueError("accuracy tolerance must be positive")


@dataclass
class KktResidual:
    """First-order optimality diagnostics at a primal/dual point.

    Stationarity residuals are zero at an exact KKT point; on activated
    entries they equal the gradient-minus-dual gap directly, on inactive
    entries only a positive gap (a violation of dual feasibility) is
    reported.  ``primal`` holds (relative budget violation, ratio-sum
    violation, worst negative power, worst negative ratio).
    """

    stationarity_p_r: np.ndarray
    stationarity_p_d: np.ndarray
    stationarity_t: np.ndarray
    primal: np.ndarray
    slackness: np.ndarray

    @property
    def max_abs(self) -> float:
        parts = [self.stationarity_p_r, self.stationarity_p_d,
                 self.stationarity_t, self.primal, self.slackness]
        return float(max((np.max(np.abs(p)) for p in parts if p.size),
                         default=0.0))


def water_filling(m, budget: float) -> tuple[np.ndarray, float]:
    """Classic water-filling: p_i = max(0, 1/v - 1/m_i) meeting the budget.

    ``m`` must be sorted non-increasing.  Returns the powers and the water
    level dual v.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise ValueError("water_filling needs at least one channel")
    if np.any(np.diff(m) > 0):
        raise ValueError("coefficients must be sorted non-increasing")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if budget == 0:
        return np.zeros(m.size), float(m[0])
    inv = 1.0 / m
    # largest k with water level above 1/m_k
    for k in range(m.size, 0, -1):
        level = (budget + inv[:k].sum()) / k
        if level >= inv[k - 1]:
            break
    p = np.maximum(0.0, level - inv)
    p[k:] = 0.0
    return p, float(1.0 / level)


def _real_cubic_roots(b, d):
    """Real roots of x^3 + b*x^2 + d = 0, vectorized over b and d.

    Returns an array of shape (3,) + broadcast shape with NaN in unused
    slots.  Trigonometric branch for three real roots, Cardano for one.
    """
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    b, d = np.broadcast_arrays(b, d)
    out_shape = (3,) + b.shape
    b, d = np.atleast_1d(b), np.atleast_1d(d)
    p = -b ** 2 / 3.0
    q = 2.0 * b ** 3 / 27.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    roots = np.full((3,) + b.shape, np.nan)

    three = disc <= 0
    if np.any(three):
        pp, qq = p[three], q[three]
        r = np.sqrt(np.maximum(-pp / 3.0, 0.0))
        # p == 0 with disc <= 0 forces q == 0: triple root at y = 0
        arg = np.zeros_like(pp)
        nz = r > 0
        arg[nz] = np.clip(3.0 * qq[nz] / (2.0 * pp[nz] * r[nz]), -1.0, 1.0)
        theta = np.arccos(arg)
        for i in range(3):
            roots[i][three] = (2.0 * r * np.cos((theta - 2.0 * np.pi * i) / 3.0)
                               - b[three] / 3.0)

    one = ~three
    if np.any(one):
        sq = np.sqrt(disc[one])
        y = np.cbrt(-q[one] / 2.0 + sq) + np.cbrt(-q[one] / 2.0 - sq)
        roots[0][one] = y - b[one] / 3.0

    # Newton polish against the original polynomial
    for _ in range(3):
        x = roots
        f = x ** 3 + b * x ** 2 + d
        fp = 3.0 * x ** 2 + 2.0 * b * x
        with np.errstate(invalid="ignore", divide="ignore"):
            step = np.where(np.abs(fp) > 0, f / fp, 0.0)
        roots = np.where(np.isnan(x), x, x - step)
    return roots.reshape(out_shape)


def cubic_roots(v: float, p_r_total: float, m: float,
                ) -> tuple[np.ndarray, np.ndarray]:
    """Real roots of p^3 - (1/v) p^2 + P_r^2/m = 0 with validity flags.

    A root is a valid cascaded power only when
    ``p >= max(4 v^2 P_r^2 / m, 1/(2v))`` (the square root in the
    partition-ratio expression must be real).
    """
    if v <= 0 or m <= 0 or p_r_total < 0:
        raise ValueError("v and m must be positive, P_r nonnegative")
    roots = _real_cubic_roots(-1.0 / v, p_r_total ** 2 / m)
    floor = max(4.0 * v ** 2 * p_r_total ** 2 / m, 1.0 / (2.0 * v))
    valid = ~np.isnan(roots) & (roots >= floor * (1 - 1e-9))
    return roots, valid


def _pattern_sum(w, m_tilde_head):
    """sum over the head of (1/w + sqrt(1/w^2 - 1/m)), decreasing in w."""
    return np.sum(1.0 / w + np.sqrt(np.maximum(1.0 / w ** 2
                                               - 1.0 / m_tilde_head, 0.0)))


def solve_p32(m_tilde) -> tuple[np.ndarray, float]:
    """Globally optimal partition ratios for fixed powers.

    ``m_tilde`` (sorted non-increasing) are the per-sub-surface products
    m_s * p_s.  Candidates are the single-active vector [1, 0, ...] and
    the all-plus prefixes of every length; each prefix pattern exists iff
    its ratio-sum equation has a root w in (0, sqrt(min head m_tilde)].
    Returns the best t along with its dual w.
    """
    m_tilde = np.atleast_1d(np.asarray(m_tilde, dtype=float))
    if np.any(m_tilde <= 0):
        raise ValueError("m_tilde must be positive")
    if np.any(np.diff(m_tilde) > 0):
        raise ValueError("m_tilde must be sorted non-increasing")
    s = m_tilde.size

    def objective(t):
        return float(np.sum(np.log2(1.0 + m_tilde * t ** 2)))

    best_t = np.zeros(s)
    best_t[0] = 1.0
    best_w = 2.0 * m_tilde[0] / (1.0 + m_tilde[0])
    best_c = objective(best_t)

    for k in range(2, s + 1):
        head = m_tilde[:k]
        w_max = np.sqrt(head[-1])
        if _pattern_sum(w_max, head) > 1.0:
            continue  # pattern does not exist at this k
        lo = w_max
        while _pattern_sum(lo, head) < 1.0:
            lo /= 2.0
            if lo < 1e-300:
                break
        hi = w_max
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if _pattern_sum(mid, head) >= 1.0:
                lo = mid
            else:
                hi = mid
        w = 0.5 * (lo + hi)
        t = np.zeros(s)
        t[:k] = 1.0 / w + np.sqrt(np.maximum(1.0 / w ** 2 - 1.0 / head, 0.0))
        t[:k] /= t[:k].sum()  # remove bisection residue; sum is 1 by design
        c = objective(t)
        if c > best_c + 1e-12:
            best_t, best_w, best_c = t, w, c
    return best_t, float(best_w)


def search_bounds(s_active, i_active, m_r, m_d, power: float,
                  ) -> tuple[float, float]:
    """Dual-search interval for one (activated-cascaded, activated-direct)
    block.

    Lower bound from the cascaded-power budget and p >= 1/(2v); upper
    bound from t <= 1 and from nonnegativity of the weakest activated
    direct power.  An empty direct set drops the direct terms from both
    bounds.
    """
    m_r = np.asarray(m_r, dtype=float)
    m_d = np.asarray(m_d, dtype=float)
    k, j = len(s_active), len(i_active)
    if k < 1:
        raise ValueError("at least one cascaded path must be activated")
    inv_d = np.sum(1.0 / m_d[list(i_active)]) if j else 0.0
    inv_r = np.sum(1.0 / m_r[list(s_active)])
    b_l = max(j / (power + inv_d) if j else 0.0, 1.0 / (2.0 * power))
    b_u = (j + k) / (power + inv_d + inv_r)
    if j:
        b_u = min(b_u, float(m_d[max(i_active)]))
    return float(b_l), float(b_u)


def _seed_solution(problem: AsymptoticProblem) -> Solution:
    """Water-filling solution with the single-active partition t=[1,0,...]."""
    coeffs = np.concatenate([[problem.m_r[0]], problem.m_d])
    order = np.argsort(-coeffs, kind="stable")
    p_sorted, v = water_filling(coeffs[order], problem.power)
    p = np.empty_like(p_sorted)
    p[order] = p_sorted
    p_r = np.zeros(problem.s_max)
    p_r[0] = p[0]
    p_d = p[1:]
    t = np.zeros(problem.s_max)
    t[0] = 1.0
    alloc = Allocation(p_r=p_r, p_d=p_d, t=t)
    w = 2.0 * v * p_r[0]
    return Solution(problem=problem, allocation=alloc, v=v, w=w,
                    rate=rate(problem, alloc),
                    s_active=[0] if p_r[0] > 0 else [],
                    i_active=[i for i in range(problem.l3) if p_d[i] > 0])


def grid_search(problem: AsymptoticProblem,
                cfg: GridSearchConfig | None = None) -> Solution:
    """1D dual grid search for the joint power/partition optimum.

    Seeds with the single-active water-filling solution, then for every
    prefix pair of activated sets scans v over its feasibility interval:
    direct powers follow in closed form, cascaded powers are valid cubic
    roots, and grid points meeting the power budget within the accuracy
    tolerance become candidates.  Returns the best candidate by rate
    (ties keep the fewest activated paths).
    """
    cfg = cfg or GridSearchConfig()
    best = _seed_solution(problem)
    best_rate = best.rate
    P = problem.power

    for k in range(2, problem.s_max + 1):
        s_active = list(range(k))
        m_head = problem.m_r[:k]
        for j in range(0, problem.l3 + 1):
            i_active = list(range(j))
            b_l, b_u = search_bounds(s_active, i_active, problem.m_r,
                                     problem.m_d, P)
            if b_u <= b_l:
                continue
            step = cfg.grid_size or (b_u - b_l) / 2000.0
            grid = np.arange(b_l, b_u, step)
            grid = np.append(grid, b_u)
            inv_v = 1.0 / grid

            if j:
                p_d_grid = inv_v[None, :] - (1.0 / problem.m_d[:j])[:, None]
                ok = np.all(p_d_grid >= -1e-15, axis=0)
                p_r_tot = P - np.clip(p_d_grid, 0.0, None).sum(axis=0)
            else:
                p_d_grid = np.zeros((0, grid.size))
                ok = np.ones(grid.size, dtype=bool)
                p_r_tot = np.full(grid.size, P)
            ok &= p_r_tot > 0
            if not np.any(ok):
                continue

            # roots[s]: (3, nv) candidate cascaded powers for path s
            roots, valid = [], []
            for s in range(k):
                r = _real_cubic_roots(-inv_v, p_r_tot ** 2 / m_head[s])
                floor = np.maximum(4.0 * grid ** 2 * p_r_tot ** 2 / m_head[s],
                                   inv_v / 2.0)
                valid.append(~np.isnan(r) & (r >= floor[None, :] * (1 - 1e-9))
                             & ok[None, :])
                roots.append(np.where(np.isnan(r), 0.0, r))

            for combo in itertools.product(range(3), repeat=k):
                mask = ok.copy()
                total = np.zeros(grid.size)
                for s in range(k):
                    mask &= valid[s][combo[s]]
                    total += roots[s][combo[s]]
                mask &= np.abs(total - p_r_tot) < cfg.acc_tol * P
                if not np.any(mask):
                    continue
                for idx in np.nonzero(mask)[0]:
                    p_r = np.zeros(problem.s_max)
                    for s in range(k):
                        p_r[s] = roots[s][combo[s]][idx]
                    # optimality requires non-increasing cascaded powers
                    if np.any(np.diff(p_r[:k]) > 1e-12 * P):
                        continue
                    # rescale onto the exact budget
                    p_r[:k] *= p_r_tot[idx] / p_r[:k].sum()
                    p_d = np.zeros(problem.l3)
                    if j:
                        p_d[:j] = np.clip(p_d_grid[:, idx], 0.0, None)
                    t = np.zeros(problem.s_max)
                    t[:k] = p_r[:k] / p_r_tot[idx]
                    alloc = Allocation(p_r=p_r, p_d=p_d, t=t)
                    c = rate(problem, alloc)
                    if c > best_rate + 1e-12:
                        best_rate = c
                        best = Solution(
                            problem=problem, allocation=alloc,
                            v=float(grid[idx]),
                            w=float(2.0 * grid[idx] * p_r_tot[idx]),
                            rate=c, s_active=s_active,
                            i_active=[i for i in i_active if p_d[i] > 0])
    return best


def _lm_residual(x, m_r, m_d, power):
    k, j = m_r.size, m_d.size
    p_r = x[:k]
    p_d = x[k:k + j]
    t = x[k + j:2 * k + j]
    v, w = x[-2], x[-1]
    r = np.empty(3 * k + j + 2)
    r[:k] = (p_r - (1.0 / v - 1.0 / (m_r * t ** 2))) / power
    r[k:k + j] = (p_d - (1.0 / v - 1.0 / m_d)) / power
    # squared form of the plus-root ratio equation (avoids sqrt domain)
    r[k + j:2 * k + j] = t ** 2 - 2.0 * t / w + 1.0 / (m_r * p_r)
    r[2 * k + j:3 * k + j] = t - 2.0 * v * p_r / w
    r[-2] = (p_r.sum() + p_d.sum() - power) / power
    r[-1] = t.sum() - 1.0
    return r


def lm_solve(problem: AsymptoticProblem, s_active, i_active,
             initial: Allocation | None = None,
             max_iter: int = 500) -> tuple[Solution, KktResidual]:
    """Levenberg-Marquardt root finding on the KKT nonlinear system.

    Unknowns are the activated powers, ratios, and duals (v, w); residuals
    are the stationarity/consistency/budget equations of the activated
    block.  Damping grows tenfold on a rejected step and shrinks tenfold
    on acceptance; negative unknowns are projected back to a small
    positive floor.  Raises :class:`LmDivergenceError` after 50
    consecutive rejections, letting the caller fall back to the grid
    search.
    """
    k, j = len(s_active), len(i_active)
    if k < 1:
        raise ValueError("at least one cascaded path must be activated")
    m_r = problem.m_r[list(s_active)]
    m_d = problem.m_d[list(i_active)] if j else np.empty(0)
    P = problem.power

    if initial is not None:
        p_r0 = np.maximum(initial.p_r[list(s_active)], 1e-6 * P)
        p_d0 = (np.maximum(initial.p_d[list(i_active)], 1e-6 * P)
                if j else np.empty(0))
        t0 = np.maximum(initial.t[list(s_active)], 1e-6)
    else:
        share = P / (k + j)
        p_r0 = np.full(k, share)
        p_d0 = np.full(j, share)
        t0 = np.full(k, 1.0 / k)
    v0 = 1.0 / (p_r0[0] + 1.0 / (m_r[0] * t0[0] ** 2))
    w0 = 2.0 * v0 * p_r0.sum()
    x = np.concatenate([p_r0, p_d0, t0, [v0, w0]])
    floor = 1e-12 * np.maximum(np.abs(x), 1e-30)

    lam = 1e-3
    r = _lm_residual(x, m_r, m_d, P)
    norm = np.linalg.norm(r)
    stall = 0
    for _ in range(max_iter):
        if norm < 1e-10:
            break
        # forward-difference Jacobian
        jac = np.empty((r.size, x.size))
        for c in range(x.size):
            h = 1e-7 * max(abs(x[c]), 1e-7)
            xp = x.copy()
            xp[c] += h
            jac[:, c] = (_lm_residual(xp, m_r, m_d, P) - r) / h
        jtj = jac.T @ jac
        g = jac.T @ r
        try:
            delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), -g)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(jtj + lam * np.eye(x.size), -g,
                                    rcond=None)[0]
        x_new = np.maximum(x + delta, floor)
        r_new = _lm_residual(x_new, m_r, m_d, P)
        norm_new = np.linalg.norm(r_new)
        if norm_new < norm:
            x, r, norm = x_new, r_new, norm_new
            lam = max(lam / 10.0, 1e-15)
            stall = 0
        else:
            lam *= 10.0
            stall += 1
            if stall >= 50:
                raise LmDivergenceError(
                    f"no progress for 50 iterations (residual {norm:.3e})")
    if norm >= 1e-8:
        raise LmDivergenceError(f"not converged (residual {norm:.3e})")

    p_r = np.zeros(problem.s_max)
    p_r[list(s_active)] = x[:k]
    p_d = np.zeros(problem.l3)
    if j:
        p_d[list(i_active)] = x[k:k + j]
    t = np.zeros(problem.s_max)
    t[list(s_active)] = x[k + j:2 * k + j]
    alloc = Allocation(p_r=p_r, p_d=p_d, t=t)
    sol = Solution(problem=problem, allocation=alloc, v=float(x[-2]),
                   w=float(x[-1]), rate=rate(problem, alloc),
                   s_active=list(s_active), i_active=list(i_active))
    return sol, kkt_residual(problem, sol)


def kkt_residual(problem: AsymptoticProblem, solution: Solution,
                 active_tol: float = 1e-12) -> KktResidual:
    """Stationarity, primal-feasibility, and slackness diagnostics."""
    a = solution.allocation
    v, w = solution.v, solution.w
    m_r, m_d = problem.m_r, problem.m_d
    grad_p_r = m_r * a.t ** 2 / (1.0 + m_r * a.p_r * a.t ** 2)
    grad_t = 2.0 * m_r * a.p_r * a.t / (1.0 + m_r * a.p_r * a.t ** 2)
    stat_p_r = np.where(a.p_r > active_tol, grad_p_r - v,
                        np.maximum(grad_p_r - v, 0.0))
    stat_t = np.where(a.t > active_tol, grad_t - w,
                      np.maximum(grad_t - w, 0.0))
    if problem.l3:
        grad_p_d = m_d / (1.0 + m_d * a.p_d)
        stat_p_d = np.where(a.p_d > active_tol, grad_p_d - v,
                            np.maximum(grad_p_d - v, 0.0))
        lam_d = np.where(a.p_d > active_tol, 0.0,
                         np.maximum(v - grad_p_d, 0.0))
        slack_d = lam_d * a.p_d
    else:
        stat_p_d = np.empty(0)
        slack_d = np.empty(0)
    lam_r = np.where(a.p_r > active_tol, 0.0, np.maximum(v - grad_p_r, 0.0))
    mu = np.where(a.t > active_tol, 0.0, np.maximum(w - grad_t, 0.0))
    primal = np.array([
        abs(a.total_power - problem.power) / problem.power,
        abs(a.t.sum() - 1.0),
        max(0.0, -min(a.p_r.min(), a.p_d.min() if problem.l3 else 0.0)),
        max(0.0, -a.t.min()),
    ])
    slackness = np.concatenate([lam_r * a.p_r, slack_d, mu * a.t])
    return KktResidual(stationarity_p_r=stat_p_r, stationarity_p_d=stat_p_d,
                       stationarity_t=stat_t, primal=primal,
                       slackness=slackness)


def classify_pattern(solution: Solution, tol: float = 1e-6) -> list[str]:
    """Label each partition ratio as '0', '+', or '-' per the KKT forms."""
    a = solution.allocation
    w = solution.w
    labels = []
    for s in range(solution.problem.s_max):
        if a.t[s] <= tol:
            labels.append("0")
            continue
        m_tilde = solution.problem.m_r[s] * a.p_r[s]
        root = np.sqrt(max(1.0 / w ** 2 - 1.0 / m_tilde, 0.0))
        if abs(a.t[s] - (1.0 / w + root)) <= abs(a.t[s] - (1.0 / w - root)):
            labels.append("+")
        else:
            labels.append("-")
    return labels


def solve(problem: AsymptoticProblem, cfg: GridSearchConfig | None = None,
          method: str = "grid") -> Solution:
    """Top-level solve: grid search, optional LM polish, sanity checks.

    ``method`` is 'grid', 'lm' (cold-started over all activated-set
    blocks, grid fallback on divergence), or 'both' (grid followed by a
    warm-started LM polish kept only when it improves the rate).
    Verifies the linear ratio/power relation and the non-increasing
    ordering on the returned solution.
    """
    if method not in ("grid", "lm", "both"):
        raise ValueError(f"unknown method {method!r}")
    sol = grid_search(problem, cfg)
    if method == "lm":
        best = _seed_solution(problem)
        for k in range(1, problem.s_max + 1):
            for j in range(0, problem.l3 + 1):
                try:
                    cand, _ = lm_solve(problem, list(range(k)),
                                       list(range(j)))
                except LmDivergenceError:
                    continue
                if cand.rate > best.rate + 1e-12:
                    best = cand
        sol = best if best.rate >= sol.rate - 1e-12 else sol
    elif method == "both" and sol.s_active:
        try:
            cand, _ = lm_solve(problem, sol.s_active,
                               sol.i_active, sol.allocation)
            # the exact system solution may differ from the grid point by
            # rounding; keep it unless it is genuinely worse
            if cand.rate > sol.rate - 1e-9 * max(1.0, abs(sol.rate)):
                sol = cand
        except LmDivergenceError:
            pass

    a = sol.allocation
    p_r_tot = a.p_r.sum()
    if p_r_tot > 0:
        gap = np.max(np.abs(a.t - a.p_r / p_r_tot))
        if gap > 1e-6:
            raise RuntimeError(f"ratio/power relation violated ({gap:.2e})")
    if np.any(np.diff(a.t) > 1e-9) or np.any(np.diff(a.p_r) > 1e-9):
        raise RuntimeError("ratios/powers not in non-increasing order")
    return sol
