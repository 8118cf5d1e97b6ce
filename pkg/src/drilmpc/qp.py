"""Dense convex quadratic programming by the primal active-set method.

Solves  min 1/2 x'Hx + f'x  s.t.  a_eq x = b_eq,  a_ub x <= b_ub,
lower <= x <= upper  for positive-definite H, starting from a feasible
point supplied by the caller. Equality rows may be rank deficient; they are
reduced to an orthonormal row basis before iterating. All tie-breaking is
lowest-index, so runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MULT_TOL = 1e-10
STEP_TOL = 1e-12
RATIO_TOL = 1e-12
START_TOL = 1e-6


class QpIterationError(RuntimeError):
    """The active-set loop hit its iteration cap."""


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    value: float
    iterations: int
    active: tuple[int, ...]


def _reduce_equalities(a_eq: np.ndarray, b_eq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal row basis of the equality system (drops redundant rows)."""
    if a_eq.shape[0] == 0:
        return a_eq, b_eq
    u, s, vt = np.linalg.svd(a_eq, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return np.zeros((0, a_eq.shape[1])), np.zeros(0)
    rank = int(np.sum(s > 1e-12 * s[0]))
    rows = vt[:rank]
    rhs = (u[:, :rank].T @ b_eq) / s[:rank]
    return rows, rhs


def _kkt_step(h: np.ndarray, grad: np.ndarray, a_act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the equality-constrained step system for (p, multipliers)."""
    n = h.shape[0]
    m = a_act.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = h
    kkt[:n, n:] = a_act.T
    kkt[n:, :n] = a_act
    rhs = np.concatenate([-grad, np.zeros(m)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        kkt[n:, n:] -= 1e-12 * np.eye(m)
        sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


def solve_qp(
    h: np.ndarray,
    f: np.ndarray,
    x0: np.ndarray,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    a_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> QpSolution:
    """Minimize a strictly convex quadratic from a feasible starting point."""
    h = np.asarray(h, dtype=float)
    f = np.asarray(f, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    n = f.size
    if h.shape != (n, n):
        raise ValueError("h must be square and match f")

    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    a_eq, b_eq = _reduce_equalities(a_eq, b_eq)

    # Stack every inequality as one row system g_mat x <= g_rhs:
    # general rows first, then finite upper bounds, then finite lower bounds.
    blocks_mat = []
    blocks_rhs = []
    if a_ub is not None and np.asarray(b_ub).size:
        blocks_mat.append(np.asarray(a_ub, dtype=float))
        blocks_rhs.append(np.asarray(b_ub, dtype=float))
    if upper is not None:
        upper = np.asarray(upper, dtype=float)
        idx = np.flatnonzero(np.isfinite(upper))
        rows = np.zeros((idx.size, n))
        rows[np.arange(idx.size), idx] = 1.0
        blocks_mat.append(rows)
        blocks_rhs.append(upper[idx])
    if lower is not None:
        lower = np.asarray(lower, dtype=float)
        idx = np.flatnonzero(np.isfinite(lower))
        rows = np.zeros((idx.size, n))
        rows[np.arange(idx.size), idx] = -1.0
        blocks_mat.append(rows)
        blocks_rhs.append(-lower[idx])
    if blocks_mat:
        g_mat = np.vstack(blocks_mat)
        g_rhs = np.concatenate(blocks_rhs)
    else:
        g_mat = np.zeros((0, n))
        g_rhs = np.zeros(0)

    start_violation = 0.0
    if a_eq.shape[0]:
        start_violation = max(start_violation, float(np.max(np.abs(a_eq @ x - b_eq))))
    if g_mat.shape[0]:
        start_violation = max(start_violation, float(np.max(g_mat @ x - g_rhs, initial=0.0)))
    if start_violation > START_TOL:
        raise ValueError(f"starting point violates constraints by {start_violation:.3e}")

    m_eq = a_eq.shape[0]
    m_in = g_mat.shape[0]
    # Start with an empty inequality working set. Every constraint added later
    # satisfies g_i @ p > 0 while the current rows annihilate p, so the working
    # rows stay linearly independent and the KKT systems stay nonsingular.
    active: list[int] = []
    in_active = np.zeros(m_in, dtype=bool)

    max_iter = 50 * (n + m_in) + 200
    for iteration in range(max_iter):
        a_act = np.vstack([a_eq, g_mat[active]]) if (m_eq or active) else np.zeros((0, n))
        grad = h @ x + f
        p, lam = _kkt_step(h, grad, a_act)

        if np.max(np.abs(p), initial=0.0) <= STEP_TOL * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            ineq_lam = lam[m_eq:]
            negative = [k for k in range(len(active)) if ineq_lam[k] < -MULT_TOL]
            if not negative:
                value = float(0.5 * x @ h @ x + f @ x)
                return QpSolution(x=x, value=value, iterations=iteration, active=tuple(active))
            drop = min(negative, key=lambda k: active[k])
            in_active[active[drop]] = False
            del active[drop]
            continue

        gp = g_mat @ p if m_in else np.zeros(0)
        considered = ~in_active & (gp > RATIO_TOL)
        alpha = 1.0
        blocking = -1
        if np.any(considered):
            slack = np.maximum(g_rhs - g_mat @ x, 0.0)
            ratios = np.where(considered, slack / np.where(considered, gp, 1.0), np.inf)
            best = int(np.argmin(ratios))
            if ratios[best] < alpha:
                alpha = float(ratios[best])
                blocking = best
        x = x + alpha * p
        if blocking >= 0:
            active.append(blocking)
            active.sort()
            in_active[blocking] = True

    raise QpIterationError("active-set loop exceeded its iteration cap")
