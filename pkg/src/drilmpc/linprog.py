"""Dense linear programming: two-phase simplex with Bland's anti-cycling rule.

Problems are given in the form

    min c'z  s.t.  A z <= b,  E z = d,  lower <= z <= upper,

with infinite bounds allowed. Internally the problem is rewritten in standard
equality form (shifted, mirrored, or split variables; slack columns; phase-1
artificials) and pivoted with the backend kernel. Dual multipliers for rows
and bounds are recovered from the final basis, so optimal solutions carry a
full KKT certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

PIVOT_TOL = 1e-10

_KIND_UB = 0
_KIND_EQ = 1
_KIND_UBOUND = 2


class SimplexIterationError(RuntimeError):
    """The pivot loop hit its iteration cap without terminating."""


def _as_matrix(a, rows, cols, name):
    if a is None:
        return np.zeros((rows, cols))
    a = np.asarray(a, dtype=float)
    if a.shape != (rows, cols):
        raise ValueError(f"{name} must have shape {(rows, cols)}, got {a.shape}")
    return a


def _as_vector(v, size, name, fill=None):
    if v is None:
        if fill is None:
            return np.zeros(size)
        return np.full(size, fill)
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise ValueError(f"{name} must have shape {(size,)}, got {v.shape}")
    return v


@dataclass(frozen=True)
class LpProblem:
    """min c'z subject to a_ub z <= b_ub, a_eq z = b_eq, lower <= z <= upper."""

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("c must be a nonempty vector")
        n = c.size
        m_ub = 0 if self.b_ub is None else np.asarray(self.b_ub).size
        m_eq = 0 if self.b_eq is None else np.asarray(self.b_eq).size
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_ub", _as_matrix(self.a_ub, m_ub, n, "a_ub"))
        object.__setattr__(self, "b_ub", _as_vector(self.b_ub, m_ub, "b_ub"))
        object.__setattr__(self, "a_eq", _as_matrix(self.a_eq, m_eq, n, "a_eq"))
        object.__setattr__(self, "b_eq", _as_vector(self.b_eq, m_eq, "b_eq"))
        lower = _as_vector(self.lower, n, "lower", fill=-np.inf)
        upper = _as_vector(self.upper, n, "upper", fill=np.inf)
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpSolution:
    """Solver outcome; multiplier blocks are populated only when optimal.

    Sign conventions: status ``optimal`` satisfies the stationarity identity
    c + a_ub' dual_ub + a_eq' dual_eq - dual_lower + dual_upper = 0 with
    dual_ub, dual_lower, dual_upper >= 0 and dual_eq free.
    """

    status: str
    z: np.ndarray | None = None
    value: float | None = None
    dual_ub: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    dual_lower: np.ndarray | None = None
    dual_upper: np.ndarray | None = None


def _apply_pivot(tableau: np.ndarray, basis: np.ndarray, leave: int, enter: int) -> None:
    """One pivot, performing the same elementary steps as the kernel loop."""
    pivot = tableau[leave, enter]
    tableau[leave, :] /= pivot
    tableau[leave, enter] = 1.0
    pivot_row = tableau[leave].copy()
    factors = tableau[:, enter].copy()
    tableau -= factors[:, None] * pivot_row[None, :]
    tableau[leave] = pivot_row
    tableau[:, enter] = 0.0
    tableau[leave, enter] = 1.0
    basis[leave] = enter


def _set_objective(tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray) -> None:
    """Load a cost row and eliminate the basic columns from it."""
    m = tableau.shape[0] - 1
    tableau[m, :] = 0.0
    tableau[m, : cost.size] = cost
    for i in range(m):
        cb = cost[basis[i]]
        if cb != 0.0:
            tableau[m, :] -= cb * tableau[i, :]


def lp_solve(problem: LpProblem) -> LpSolution:
    """Solve an LP to an optimal basic solution, or certify its status.

    Returns a solution with status ``optimal``, ``infeasible`` or
    ``unbounded``. Raises :class:`SimplexIterationError` if the pivot loop
    fails to terminate within its cap (Bland's rule makes this unreachable
    short of numerical breakdown).
    """
    n = problem.n_vars
    lower, upper = problem.lower, problem.upper

    # Variable transform z = offset + sum(sign * xt) over each var's columns.
    col_var: list[int] = []
    col_sign: list[float] = []
    primary_col = np.zeros(n, dtype=int)
    offsets = np.zeros(n)
    ubound_vars: list[int] = []
    for j in range(n):
        lo, up = lower[j], upper[j]
        primary_col[j] = len(col_var)
        if np.isfinite(lo):
            offsets[j] = lo
            col_var.append(j)
            col_sign.append(1.0)
            if np.isfinite(up):
                ubound_vars.append(j)
        elif np.isfinite(up):
            offsets[j] = up
            col_var.append(j)
            col_sign.append(-1.0)
        else:
            col_var.append(j)
            col_sign.append(1.0)
            col_var.append(j)
            col_sign.append(-1.0)
    n_struct = len(col_var)
    col_var_arr = np.asarray(col_var, dtype=int)
    col_sign_arr = np.asarray(col_sign)

    m_ub = problem.b_ub.size
    m_eq = problem.b_eq.size
    row_kind = np.concatenate(
        [
            np.full(m_ub, _KIND_UB, dtype=int),
            np.full(m_eq, _KIND_EQ, dtype=int),
            np.full(len(ubound_vars), _KIND_UBOUND, dtype=int),
        ]
    )
    row_index = np.concatenate(
        [np.arange(m_ub), np.arange(m_eq), np.asarray(ubound_vars, dtype=int)]
    ).astype(int)
    m = row_kind.size

    a_struct = np.zeros((m, n_struct))
    b_std = np.zeros(m)
    orig_rows = np.vstack([problem.a_ub, problem.a_eq]) if m_ub + m_eq else np.zeros((0, n))
    orig_rhs = np.concatenate([problem.b_ub, problem.b_eq])
    for r in range(m_ub + m_eq):
        coeffs = orig_rows[r]
        a_struct[r, :] = coeffs[col_var_arr] * col_sign_arr
        b_std[r] = orig_rhs[r] - float(coeffs @ offsets)
    for k, j in enumerate(ubound_vars):
        r = m_ub + m_eq + k
        a_struct[r, primary_col[j]] = 1.0
        b_std[r] = upper[j] - lower[j]

    row_sign = np.ones(m)
    flip = b_std < 0.0
    row_sign[flip] = -1.0
    a_struct[flip] *= -1.0
    b_std[flip] = -b_std[flip]

    has_slack = row_kind != _KIND_EQ
    slack_rows = np.flatnonzero(has_slack)
    n_slack = slack_rows.size
    slack_col_of_row = np.full(m, -1, dtype=int)
    a_slack = np.zeros((m, n_slack))
    for k, r in enumerate(slack_rows):
        slack_col_of_row[r] = n_struct + k
        a_slack[r, k] = row_sign[r]

    needs_art = ~(has_slack & ~flip)
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    a_art = np.zeros((m, n_art))
    basis = np.zeros(m, dtype=np.int64)
    for k, r in enumerate(art_rows):
        a_art[r, k] = 1.0
        basis[r] = n_struct + n_slack + k
    for r in np.flatnonzero(~needs_art):
        basis[r] = slack_col_of_row[r]

    n_total = n_struct + n_slack + n_art
    tableau = np.zeros((m + 1, n_total + 1))
    tableau[:m, :n_struct] = a_struct
    tableau[:m, n_struct : n_struct + n_slack] = a_slack
    tableau[:m, n_struct + n_slack : n_total] = a_art
    tableau[:m, n_total] = b_std

    max_iter = 200 * (m + n_total) + 1000
    scale = max(1.0, float(np.abs(b_std).max()) if m else 1.0)

    if n_art:
        cost1 = np.zeros(n_total)
        cost1[n_struct + n_slack :] = 1.0
        _set_objective(tableau, basis, cost1)
        status = kernels.simplex_pivots(tableau, basis, PIVOT_TOL, max_iter)
        if status == kernels.SIMPLEX_ITER_LIMIT:
            raise SimplexIterationError("phase-1 simplex exceeded its iteration cap")
        if -tableau[m, n_total] > 1e-9 * scale:
            return LpSolution(status="infeasible")
        # Drive leftover artificials out of the basis; drop redundant rows.
        drop_rows = []
        for i in range(m):
            if basis[i] < n_struct + n_slack:
                continue
            row = tableau[i, : n_struct + n_slack]
            candidates = np.flatnonzero(np.abs(row) > PIVOT_TOL)
            if candidates.size:
                _apply_pivot(tableau, basis, i, int(candidates[0]))
            else:
                drop_rows.append(i)
        if drop_rows:
            keep = np.setdiff1d(np.arange(m), np.asarray(drop_rows, dtype=int))
            tableau = np.vstack([tableau[keep], tableau[m:]])
            basis = basis[keep]
            row_kind = row_kind[keep]
            row_index = row_index[keep]
            row_sign = row_sign[keep]
            a_struct = a_struct[keep]
            a_slack = a_slack[keep]
            m = keep.size
        tableau = np.hstack([tableau[:, : n_struct + n_slack], tableau[:, n_total:]])
        n_total = n_struct + n_slack

    cost2 = np.zeros(n_total)
    cost2[:n_struct] = problem.c[col_var_arr] * col_sign_arr
    _set_objective(tableau, basis, cost2)
    status = kernels.simplex_pivots(tableau, basis, PIVOT_TOL, max_iter)
    if status == kernels.SIMPLEX_ITER_LIMIT:
        raise SimplexIterationError("phase-2 simplex exceeded its iteration cap")
    if status == kernels.SIMPLEX_UNBOUNDED:
        return LpSolution(status="unbounded")

    xt = np.zeros(n_total)
    xt[basis] = tableau[:m, n_total]
    z = offsets.copy()
    np.add.at(z, col_var_arr, col_sign_arr * xt[:n_struct])
    value = float(problem.c @ z)

    a_clean = np.hstack([a_struct, a_slack])
    basis_mat = a_clean[:, basis]
    try:
        y_std = np.linalg.solve(basis_mat.T, cost2[basis])
    except np.linalg.LinAlgError:
        y_std = np.linalg.lstsq(basis_mat.T, cost2[basis], rcond=None)[0]
    reduced = cost2 - a_clean.T @ y_std

    dual_ub = np.zeros(m_ub)
    dual_eq = np.zeros(m_eq)
    dual_lower = np.zeros(n)
    dual_upper = np.zeros(n)
    for r in range(m):
        mult = -row_sign[r] * y_std[r]
        if row_kind[r] == _KIND_UB:
            dual_ub[row_index[r]] = mult
        elif row_kind[r] == _KIND_EQ:
            dual_eq[row_index[r]] = mult
        else:
            dual_upper[row_index[r]] = mult
    for j in range(n):
        if np.isfinite(lower[j]):
            dual_lower[j] = reduced[primary_col[j]]
        elif np.isfinite(upper[j]):
            dual_upper[j] = reduced[primary_col[j]]

    return LpSolution(
        status="optimal",
        z=z,
        value=value,
        dual_ub=dual_ub,
        dual_eq=dual_eq,
        dual_lower=dual_lower,
        dual_upper=dual_upper,
    )


def kkt_residuals(problem: LpProblem, sol: LpSolution) -> dict[str, float]:
    """Residuals certifying an optimal solution.

    Keys: ``primal`` (largest constraint/bound violation), ``stationarity``
    (sup-norm of the Lagrangian gradient), ``comp_slack`` (largest
    complementary-slackness product), ``dual_sign`` (most negative inequality
    multiplier, clipped at zero), ``gap`` (primal value minus Lagrangian dual
    value).
    """
    z = sol.z
    primal = 0.0
    if problem.b_ub.size:
        primal = max(primal, float(np.max(problem.a_ub @ z - problem.b_ub, initial=0.0)))
    if problem.b_eq.size:
        primal = max(primal, float(np.max(np.abs(problem.a_eq @ z - problem.b_eq), initial=0.0)))
    finite_lo = np.isfinite(problem.lower)
    finite_up = np.isfinite(problem.upper)
    if finite_lo.any():
        primal = max(primal, float(np.max(problem.lower[finite_lo] - z[finite_lo], initial=0.0)))
    if finite_up.any():
        primal = max(primal, float(np.max(z[finite_up] - problem.upper[finite_up], initial=0.0)))

    grad = problem.c.copy()
    if problem.b_ub.size:
        grad += problem.a_ub.T @ sol.dual_ub
    if problem.b_eq.size:
        grad += problem.a_eq.T @ sol.dual_eq
    grad -= sol.dual_lower
    grad += sol.dual_upper
    stationarity = float(np.max(np.abs(grad)))

    comp = 0.0
    if problem.b_ub.size:
        comp = max(comp, float(np.max(np.abs(sol.dual_ub * (problem.b_ub - problem.a_ub @ z)), initial=0.0)))
    lo_gap = np.where(finite_lo, z - problem.lower, 0.0)
    up_gap = np.where(finite_up, problem.upper - z, 0.0)
    comp = max(comp, float(np.max(np.abs(sol.dual_lower * lo_gap), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(sol.dual_upper * up_gap), initial=0.0)))

    sign = 0.0
    if problem.b_ub.size:
        sign = max(sign, float(np.max(-sol.dual_ub, initial=0.0)))
    sign = max(sign, float(np.max(-sol.dual_lower, initial=0.0)))
    sign = max(sign, float(np.max(-sol.dual_upper, initial=0.0)))

    dual_value = 0.0
    if problem.b_ub.size:
        dual_value -= float(problem.b_ub @ sol.dual_ub)
    if problem.b_eq.size:
        dual_value -= float(problem.b_eq @ sol.dual_eq)
    dual_value += float(np.sum(problem.lower[finite_lo] * sol.dual_lower[finite_lo]))
    dual_value -= float(np.sum(problem.upper[finite_up] * sol.dual_upper[finite_up]))
    gap = abs(sol.value - dual_value)

    return {
        "primal": primal,
        "stationarity": stationarity,
        "comp_slack": comp,
        "dual_sign": sign,
        "gap": gap,
    }
