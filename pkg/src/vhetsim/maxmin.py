"""Two-hop end-to-end SINR evaluation and max-min power allocation.

Each user's end-to-end SINR is a sum over relay branches of the
amplify-and-forward term g1*g2/(g1 + g2 + 1), which is strictly increasing
and concave in that user's own power column; different users couple only
through the per-relay power budgets. Feasibility of a target SINR is decided
by raising every unmet user's column along its second-hop gains at a common
rate, freezing relay rows as their budgets fill; the max-min value is found
by bisection over the target, floored at the equal-split allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class TwoHopLink:
    """One (relay, user) pair: first-hop SINR and second-hop gain per watt."""

    hop1_sinr: float
    hop2_gain: float

    def __post_init__(self):
        for name, v in (("hop1_sinr", self.hop1_sinr), ("hop2_gain", self.hop2_gain)):
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"TwoHopLink.{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-(relay, user) transmit powers in watts."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2:
            raise ValueError(f"allocation must be 2D (relays x users), got shape {q.shape}")
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise ValueError("allocation powers must be finite and >= 0")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class MaxMinResult:
    allocation: PowerAllocation
    min_sinr: float
    iterations: int
    converged: bool


def hop1_mf_sinr(h_all: np.ndarray, k: int, p_user_w: float, noise_w: float) -> float:
    """Match-filter SINR of user k at one relay, with multiuser interference.

    h_all holds all users' channels to this relay as columns (elements x users).
    """
    h = np.asarray(h_all, dtype=complex)
    if h.ndim != 2:
        raise ValueError(f"h_all must be (elements x users), got shape {h.shape}")
    if p_user_w <= 0 or noise_w <= 0:
        raise ValueError("user power and noise must be > 0 W")
    hk = h[:, k]
    nk2 = float(np.real(hk.conj() @ hk))
    if nk2 == 0.0:
        raise ValueError(f"user {k} has an all-zero channel")
    cross = np.abs(hk.conj() @ h) ** 2
    interference = p_user_w * (float(cross.sum()) - float(cross[k]))
    return p_user_w * nk2**2 / (interference + noise_w * nk2)


def _branch_sinr(hop1: np.ndarray, gamma2: np.ndarray) -> np.ndarray:
    return hop1 * gamma2 / (hop1 + gamma2 + 1.0)


def _grids(links) -> tuple[np.ndarray, np.ndarray]:
    rows = list(links)
    if not rows:
        raise ValueError("need at least one relay row")
    hop1 = np.array([[link.hop1_sinr for link in row] for row in rows], dtype=float)
    g2 = np.array([[link.hop2_gain for link in row] for row in rows], dtype=float)
    if hop1.ndim != 2 or hop1.shape[1] < 1:
        raise ValueError("links must form a rectangular relays x users grid")
    return hop1, g2


def af_endtoend_sinr(links_for_user, q_col) -> float:
    """End-to-end SINR of one user: MRC over orthogonal AF relay branches."""
    links = list(links_for_user)
    g1 = np.array([l.hop1_sinr for l in links], dtype=float)
    g2 = np.array([l.hop2_gain for l in links], dtype=float)
    q = np.asarray(q_col, dtype=float)
    if q.shape != g1.shape:
        raise ValueError(f"power column shape {q.shape} does not match {g1.shape} branches")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("branch powers must be finite and >= 0")
    return float(_branch_sinr(g1, q * g2).sum())


def _user_sinrs(hop1: np.ndarray, g2: np.ndarray, q: np.ndarray) -> np.ndarray:
    return _branch_sinr(hop1, q * g2).sum(axis=0)


def _feasible_allocation(gamma: float, hop1: np.ndarray, g2: np.ndarray,
                         budgets: np.ndarray) -> tuple[bool, np.ndarray | None]:
    """Try to meet SINR >= gamma for every user within per-relay budgets.

    All unmet users raise their power columns along their hop-2 gains at a
    common rate; a relay row freezes once its budget fills, after which growth
    continues on the remaining rows. Infeasible if some user cannot reach
    gamma even with unbounded power on its unfrozen rows.
    """
    m, k = hop1.shape
    q = np.zeros((m, k))
    frozen = np.zeros(m, dtype=bool)
    active = _user_sinrs(hop1, g2, q) < gamma * (1.0 - 1e-9)

    for _ in range(m + k + 2):
        if not active.any():
            return True, q
        direction = g2 * active[None, :] * (~frozen)[:, None]

        # asymptotic ceiling per active user: frozen rows keep their current
        # branch value, growable rows approach hop1 as power goes to infinity
        growable = direction > 0.0
        current = _branch_sinr(hop1, q * g2)
        ceiling = np.where(growable, hop1, current).sum(axis=0)
        if np.any(active & (ceiling <= gamma)):
            return False, None

        row_rates = direction.sum(axis=1)
        slack = budgets - q.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            row_steps = np.where(row_rates > 0, slack / np.maximum(row_rates, 1e-300), np.inf)
        row_steps[frozen | (row_rates <= 0)] = np.inf
        step_hi = float(row_steps.min())

        if not math.isfinite(step_hi):
            # no budget boundary ahead; expand until every active user is met
            step_hi = 1.0
            while step_hi < 1e30:
                trial = _user_sinrs(hop1, g2, q + direction * step_hi)
                if np.all(trial[active] >= gamma):
                    break
                step_hi *= 4.0

        # users that complete within this segment: bisect their exact steps
        end_sinr = _user_sinrs(hop1, g2, q + direction * step_hi)
        meets = active & (end_sinr >= gamma)
        user_steps = np.full(k, np.inf)
        if meets.any():
            lo_v = np.zeros(k)
            hi_v = np.full(k, step_hi)
            for _ in range(60):
                mid = 0.5 * (lo_v + hi_v)
                sinr_mid = _user_sinrs(hop1, g2, q + direction * mid[None, :])
                below = sinr_mid < gamma
                lo_v = np.where(below, mid, lo_v)
                hi_v = np.where(below, hi_v, mid)
            user_steps[meets] = hi_v[meets]

        step = min(step_hi, float(user_steps.min()))
        done_now = meets & (user_steps <= step * (1.0 + 1e-12))
        per_user = np.where(done_now, np.where(np.isfinite(user_steps), user_steps, 0.0), step)
        q = np.maximum(q + direction * per_user[None, :], 0.0)

        used = q.sum(axis=1)
        over = used > budgets * (1.0 + 1e-9)
        if over.any():
            # common-rate stepping with per-user early stops can only overshoot
            # by rounding; rescale the offending rows back onto the budget
            q[over] *= (budgets[over] / used[over])[:, None]
        frozen |= q.sum(axis=1) >= budgets * (1.0 - 1e-12)
        active = _user_sinrs(hop1, g2, q) < gamma * (1.0 - 1e-9)
    return (not active.any()), (q if not active.any() else None)


def _rebalance_rows(hop1: np.ndarray, g2: np.ndarray, q: np.ndarray,
                    budgets: np.ndarray, tol: float, max_sweeps: int = 300) -> np.ndarray:
    """Cyclic exact re-optimization of each relay row's budget split.

    One row update maximizes min_k SINR_k over that row's split with all other
    rows fixed; the required row power for a user to reach a target follows
    from inverting the branch term in closed form, so each update is a scalar
    bisection. The minimum SINR never decreases.
    """
    m, k = hop1.shape
    q = q.copy()
    for _ in range(max_sweeps):
        improved = False
        for row in range(m):
            sinrs = _user_sinrs(hop1, g2, q)
            others = sinrs - _branch_sinr(hop1[row], q[row] * g2[row])
            cap = _branch_sinr(hop1[row], budgets[row] * g2[row])
            t_lo = float(sinrs.min())
            t_hi = float((others + cap).min())
            if not t_hi > t_lo * (1.0 + 1e-12):
                continue

            def row_need(t):
                rem = t - others
                with np.errstate(divide="ignore", invalid="ignore"):
                    g2_req = np.where(rem < hop1[row],
                                      rem * (hop1[row] + 1.0) / (hop1[row] - rem), np.inf)
                    need = np.where(rem <= 0.0, 0.0,
                                    np.where(g2[row] > 0.0, g2_req / np.maximum(g2[row], 1e-300),
                                             np.inf))
                return need

            lo_t, hi_t = t_lo, t_hi
            for _ in range(60):
                mid = 0.5 * (lo_t + hi_t)
                if float(row_need(mid).sum()) <= budgets[row]:
                    lo_t = mid
                else:
                    hi_t = mid
            new_row = row_need(lo_t)
            if not np.all(np.isfinite(new_row)) or new_row.sum() > budgets[row] * (1.0 + 1e-9):
                continue
            q[row] = new_row
            leftover = budgets[row] - new_row.sum()
            if leftover > 0.0:
                worst = int(np.argmin(_user_sinrs(hop1, g2, q)))
                q[row, worst] += leftover
            if lo_t > t_lo * (1.0 + tol * 1e-3):
                improved = True
        if not improved:
            break
    return q


def _project_row_simplex(row: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = total}."""
    n = row.size
    u = np.sort(row)[::-1]
    cssv = np.cumsum(u) - total
    rho = np.nonzero(u * np.arange(1, n + 1) > cssv)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(row - theta, 0.0)


def _softmin_ascent(hop1: np.ndarray, g2: np.ndarray, q: np.ndarray,
                    budgets: np.ndarray, rounds: int = 4, iters: int = 120) -> np.ndarray:
    """Projected-gradient ascent on a softmin smoothing of the user SINRs.

    Rows are kept on their full-budget simplices (spending less never helps
    anyone). The smoothing weight is annealed towards the hard minimum; the
    best iterate by the true minimum is returned, so this never loses ground.
    """
    m, k = hop1.shape
    q = np.vstack([_project_row_simplex(q[row], budgets[row]) for row in range(m)])
    best_q, best_val = q.copy(), float(_user_sinrs(hop1, g2, q).min())
    eta = float(budgets.mean())
    for rnd in range(rounds):
        round_start = best_val
        scale = max(best_val, 1e-12)
        beta = 10.0 ** (rnd + 1) / scale
        for _ in range(iters):
            sinrs = _user_sinrs(hop1, g2, q)
            shifted = -beta * (sinrs - sinrs.min())
            w = np.exp(shifted)
            w /= w.sum()
            gamma2 = q * g2
            grad = w[None, :] * hop1 * g2 * (hop1 + 1.0) / (hop1 + gamma2 + 1.0) ** 2
            f_cur = sinrs.min() - math.log(np.exp(shifted).sum()) / beta
            accepted = False
            for _ in range(30):
                q_new = q + eta * grad
                q_new = np.vstack([_project_row_simplex(q_new[row], budgets[row])
                                   for row in range(m)])
                s_new = _user_sinrs(hop1, g2, q_new)
                f_new = s_new.min() - math.log(
                    np.exp(-beta * (s_new - s_new.min())).sum()) / beta
                if f_new > f_cur + 1e-15:
                    q = q_new
                    eta *= 1.5
                    accepted = True
                    break
                eta *= 0.5
                if eta < 1e-18 * budgets.mean():
                    break
            val = float(_user_sinrs(hop1, g2, q).min())
            if val > best_val:
                best_val, best_q = val, q.copy()
            if not accepted:
                break
        if rnd > 0 and best_val - round_start <= 1e-6 * max(round_start, 1e-12):
            break
    return best_q


def maxmin_allocate(links, budget: float, tol: float = 1e-4) -> MaxMinResult:
    """Maximize the minimum end-to-end SINR under per-relay power budgets.

    Bisection on the target SINR over [equal-split value, single-user upper
    bound]; every feasible target keeps its allocation as the incumbent, then
    cyclic per-row rebalancing and an annealed softmin ascent polish the
    incumbent (never lowering the minimum), so the returned value is never
    below the equal-split baseline.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be > 0, got {tol}")
    if budget <= 0:
        raise ValueError(f"budget must be > 0 W, got {budget}")
    hop1, g2 = _grids(links)
    m, k = hop1.shape
    budgets = np.full(m, float(budget))

    gamma_upper = float(_branch_sinr(hop1, budgets[:, None] * g2).sum(axis=0).min())
    if gamma_upper <= 0.0:
        alloc = PowerAllocation(np.zeros((m, k)))
        return MaxMinResult(alloc, 0.0, 0, True)

    q_best = np.full((m, k), budget / k)
    lo = float(_user_sinrs(hop1, g2, q_best).min())
    hi = gamma_upper
    iterations = 0
    max_iter = max(1, math.ceil(math.log2(max(hi / max(lo, 1e-300), 2.0) / tol))) + 8
    while hi - lo > tol * lo and iterations < max_iter:
        mid = 0.5 * (lo + hi)
        feasible, q_mid = _feasible_allocation(mid, hop1, g2, budgets)
        if feasible:
            lo, q_best = mid, q_mid
        else:
            hi = mid
        iterations += 1

    # hand any leftover row budget to the current worst user (orthogonal
    # branches mean nobody else is affected), then polish row by row; the
    # equal split is polished as a second deterministic start because cyclic
    # row updates can stall on tied allocations
    sinrs = _user_sinrs(hop1, g2, q_best)
    worst = int(np.argmin(sinrs))
    q_best = q_best.copy()
    q_best[:, worst] += np.maximum(budgets - q_best.sum(axis=1), 0.0)
    candidates = [
        _rebalance_rows(hop1, g2, q_best, budgets, tol),
        _rebalance_rows(hop1, g2, np.full((m, k), budget / k), budgets, tol),
    ]
    q_best = max(candidates, key=lambda qc: _user_sinrs(hop1, g2, qc).min())
    q_best = _softmin_ascent(hop1, g2, q_best, budgets)
    q_best = _rebalance_rows(hop1, g2, q_best, budgets, tol)

    min_sinr = float(_user_sinrs(hop1, g2, q_best).min())
    converged = hi - lo <= tol * lo
    return MaxMinResult(PowerAllocation(q_best), min_sinr, iterations, converged)


def _simplex_fractions(n_users: int, grid_points: int) -> np.ndarray:
    """All splits of one row budget over users on a (grid_points-1) lattice."""
    steps = grid_points - 1
    combos = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            combos.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v, slots - 1)

    rec([], steps, n_users)
    return np.asarray(combos, dtype=float) / steps


def oracle_maxmin(links, budget: float, grid_points: int) -> float:
    """Exhaustive grid search over per-relay budget splits (validation only).

    Each relay spends its full budget (more power never hurts any user), so
    the search space is the product of per-row simplex grids. Guarded to
    relays*users <= 6.
    """
    hop1, g2 = _grids(links)
    m, k = hop1.shape
    if m * k > 6:
        raise ValueError(f"oracle limited to relays*users <= 6, got {m}x{k}")
    if grid_points < 2:
        raise ValueError(f"need grid_points >= 2, got {grid_points}")
    if budget <= 0:
        raise ValueError(f"budget must be > 0 W, got {budget}")

    fracs = _simplex_fractions(k, grid_points)  # (n_splits, k)
    tables = [_branch_sinr(hop1[mm], fracs * budget * g2[mm]) for mm in range(m)]

    best = 0.0
    if m == 1:
        return float(tables[0].min(axis=1).max())
    last = tables[-1]
    for combo in product(*(range(fracs.shape[0]) for _ in range(m - 1))):
        partial = sum(tables[mm][combo[mm]] for mm in range(m - 1))
        cand = float((partial[None, :] + last).min(axis=1).max())
        if cand > best:
            best = cand
    return best
