"""Independent reference implementations used to pin expected test values.

Everything here is written from first principles against the mathematical
definitions, deliberately avoiding the library's code paths: risk measures
via sorted-tail sums, threshold grids, greedy mass transport, and zoom grids;
linear programs via vertex enumeration; quadratic programs via active-set
enumeration; the obstacle measure via the four-face half-plane form; the
beta-binomial law via exact rational arithmetic.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


# -- distributions ---------------------------------------------------------


def beta_binomial_pmf_exact(trials: int, alpha: int, beta: int) -> list[Fraction]:
    """Beta-binomial pmf for integer shapes as exact fractions.

    pmf(k) = C(n, k) * B(k + alpha, n - k + beta) / B(alpha, beta) with
    B(a, b) = (a-1)! (b-1)! / (a+b-1)! for positive integers.
    """

    def beta_fn(a: int, b: int) -> Fraction:
        return Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))

    n = trials
    norm = beta_fn(alpha, beta)
    return [
        Fraction(math.comb(n, k)) * beta_fn(k + alpha, n - k + beta) / norm
        for k in range(n + 1)
    ]


# -- risk measures ---------------------------------------------------------


def cvar_sorted_tail(values: np.ndarray, probs: np.ndarray, beta: float) -> float:
    """CVaR as the mean of the worst beta probability mass.

    Sorts outcomes from worst down and averages values over exactly beta
    mass, splitting the atom that straddles the boundary.
    """
    order = np.argsort(-np.asarray(values, dtype=float), kind="stable")
    remaining = beta
    acc = 0.0
    for idx in order:
        take = min(float(probs[idx]), remaining)
        acc += take * float(values[idx])
        remaining -= take
        if remaining <= 1e-18:
            break
    return acc / beta


def cvar_t_grid(values: np.ndarray, probs: np.ndarray, beta: float) -> float:
    """CVaR by minimizing t + E[(Z - t)+]/beta over a threshold grid.

    The objective is piecewise linear in t with kinks exactly at the atom
    values, so a grid holding every atom (plus midpoints and outer points
    for safety) contains the minimizer.
    """
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    atoms = np.unique(v)
    grid = [atoms, atoms[:-1] + np.diff(atoms) / 2.0, atoms[:1] - 1.0, atoms[-1:] + 1.0]
    ts = np.unique(np.concatenate(grid))
    objective = ts + np.maximum(v[None, :] - ts[:, None], 0.0) @ p / beta
    return float(objective.min())


def var_enumeration(values: np.ndarray, probs: np.ndarray, beta: float) -> float:
    """Smallest attained value z with P(Z <= z) >= 1 - beta, by direct scan."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probs, dtype=float)
    for z in np.unique(v):
        if float(p[v <= z].sum()) >= 1.0 - beta - 1e-12:
            return float(z)
    return float(v.max())


def worst_case_cvar_greedy(
    values: np.ndarray, p_hat: np.ndarray, theta: float, beta: float
) -> float:
    """Exact worst-case CVaR over the total-variation ball, by mass transport.

    For any threshold t the objective is linear in mu with coefficients
    (v - t)+ ordered like v, so one reweighting dominates for every t
    simultaneously: move theta mass (as available) off the smallest-value
    atoms onto a largest-value atom. Evaluating CVaR there gives the sup.
    """
    v = np.asarray(values, dtype=float)
    mu = np.asarray(p_hat, dtype=float).copy()
    order = np.argsort(v, kind="stable")
    top = order[-1]
    budget = min(float(theta), float(1.0 - mu[top]))
    take = budget
    for idx in order[:-1]:
        move = min(float(mu[idx]), take)
        mu[idx] -= move
        take -= move
        if take <= 1e-18:
            break
    mu[top] += budget - take
    return cvar_sorted_tail(v, mu, beta)


def worst_case_cvar_zoom_grid(
    values: np.ndarray,
    p_hat: np.ndarray,
    theta: float,
    beta: float,
    levels: int = 45,
    points: int = 41,
) -> float:
    """Brute-force sup of CVaR over the ball for up to three atoms.

    Lays a grid over the free simplex coordinates, keeps the feasible points
    (simplex membership and total-variation budget), evaluates CVaR exactly
    on each, and repeatedly re-centres a halved window on the best point.
    Only feasible distributions are ever evaluated, so the running maximum
    is a one-sided lower bound that converges to the sup (the objective is
    concave in mu).
    """
    v = np.asarray(values, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    L = v.size
    if L == 1:
        return float(v[0])

    def batch_cvar(mus: np.ndarray) -> np.ndarray:
        # min over atom thresholds of t + mu . (v - t)+ / beta, per row
        gains = np.maximum(v[None, :] - v[:, None], 0.0)  # [t_index, atom]
        return (v[None, :] + mus @ gains.T / beta).min(axis=1)

    def feasible(mus: np.ndarray) -> np.ndarray:
        ok = np.all(mus >= -1e-12, axis=1) & np.all(mus <= 1.0 + 1e-12, axis=1)
        tv = 0.5 * np.abs(mus - p[None, :]).sum(axis=1)
        return ok & (tv <= theta + 1e-12)

    if L == 2:
        center = np.array([p[0]])
        width = 1.0
    else:
        center = p[:2].copy()
        width = 1.0

    best_val = -np.inf
    best_pt = center.copy()
    for _ in range(levels):
        axes = [np.linspace(c - width, c + width, points) for c in center]
        if L == 2:
            free = axes[0][:, None]
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            free = np.column_stack([g0.ravel(), g1.ravel()])
        last = 1.0 - free.sum(axis=1)
        mus = np.column_stack([free, last])
        mask = feasible(mus)
        if np.any(mask):
            vals = batch_cvar(mus[mask])
            k = int(np.argmax(vals))
            if float(vals[k]) > best_val:
                best_val = float(vals[k])
                best_pt = free[mask][k]
        center = best_pt
        width *= 0.5
    return best_val


# -- linear programming ----------------------------------------------------


def lp_vertex_enumeration(
    c: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    feas_tol: float = 1e-9,
) -> tuple[str, float, np.ndarray | None]:
    """Global LP minimum by enumerating basic feasible points.

    Stacks every constraint as a hyperplane, solves all n-subsets with
    nonsingular systems, filters by feasibility, and minimizes the objective
    over the surviving vertices. Valid whenever the feasible region is a
    polytope (tests always bound every variable).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = [np.asarray(a_ub, dtype=float)] if a_ub is not None and len(a_ub) else []
    rhs = [np.asarray(b_ub, dtype=float)] if a_ub is not None and len(a_ub) else []
    n_eq = 0
    if a_eq is not None and len(a_eq):
        rows.insert(0, np.asarray(a_eq, dtype=float))
        rhs.insert(0, np.asarray(b_eq, dtype=float))
        n_eq = len(a_eq)
    if lower is not None:
        idx = np.flatnonzero(np.isfinite(lower))
        eye = np.zeros((idx.size, n))
        eye[np.arange(idx.size), idx] = 1.0
        rows.append(eye)
        rhs.append(np.asarray(lower, dtype=float)[idx])
    if upper is not None:
        idx = np.flatnonzero(np.isfinite(upper))
        eye = np.zeros((idx.size, n))
        eye[np.arange(idx.size), idx] = 1.0
        rows.append(eye)
        rhs.append(np.asarray(upper, dtype=float)[idx])
    mat = np.vstack(rows)
    vec = np.concatenate(rhs)
    m = mat.shape[0]

    combos = [
        combo
        for combo in itertools.combinations(range(m), n)
        if all(k in combo for k in range(n_eq))
    ]
    if not combos:
        return "infeasible", np.nan, None
    stacked = np.stack([mat[list(combo)] for combo in combos])
    rhs_stacked = np.stack([vec[list(combo)] for combo in combos])
    dets = np.abs(np.linalg.det(stacked))
    candidates = np.flatnonzero(dets > 1e-10)
    best_val = np.inf
    best_x = None
    for k in candidates:
        x = np.linalg.solve(stacked[k], rhs_stacked[k])
        if a_eq is not None and len(a_eq):
            if np.max(np.abs(np.asarray(a_eq) @ x - np.asarray(b_eq))) > feas_tol:
                continue
        if a_ub is not None and len(a_ub):
            if np.max(np.asarray(a_ub) @ x - np.asarray(b_ub)) > feas_tol:
                continue
        if lower is not None and np.max(np.asarray(lower) - x) > feas_tol:
            continue
        if upper is not None and np.max(x - np.asarray(upper)) > feas_tol:
            continue
        val = float(c @ x)
        if val < best_val - 1e-15:
            best_val = val
            best_x = x
    if best_x is None:
        return "infeasible", np.nan, None
    return "optimal", best_val, best_x


# -- quadratic programming -------------------------------------------------


def qp_active_set_enumeration(
    h: np.ndarray,
    f: np.ndarray,
    a_eq: np.ndarray | None,
    b_eq: np.ndarray | None,
    g_mat: np.ndarray,
    g_rhs: np.ndarray,
    tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Exact strictly convex QP minimum by enumerating candidate active sets.

    For each subset of inequality rows, solves the equality-constrained
    stationarity system and keeps solutions that are primal feasible with
    nonnegative multipliers on the chosen rows. The KKT conditions are
    necessary and sufficient here, so the best (unique) survivor is the
    global minimum.
    """
    h = np.asarray(h, dtype=float)
    f = np.asarray(f, dtype=float)
    n = f.size
    eq = np.asarray(a_eq, dtype=float) if a_eq is not None and len(a_eq) else np.zeros((0, n))
    eq_rhs = np.asarray(b_eq, dtype=float) if a_eq is not None and len(a_eq) else np.zeros(0)
    m_eq = eq.shape[0]
    m_in = g_mat.shape[0]

    best_val = np.inf
    best_x = None
    for size in range(0, min(m_in, n - m_eq) + 1):
        for combo in itertools.combinations(range(m_in), size):
            act = np.vstack([eq, g_mat[list(combo)]]) if (m_eq or combo) else np.zeros((0, n))
            rhs_act = np.concatenate([eq_rhs, g_rhs[list(combo)]])
            m = act.shape[0]
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = h
            kkt[:n, n:] = act.T
            kkt[n:, :n] = act
            try:
                sol = np.linalg.solve(kkt, np.concatenate([-f, rhs_act]))
            except np.linalg.LinAlgError:
                continue
            x, mult = sol[:n], sol[n:]
            if m_in and np.max(g_mat @ x - g_rhs) > tol:
                continue
            if m_eq and np.max(np.abs(eq @ x - eq_rhs)) > tol:
                continue
            if size and np.min(mult[m_eq:]) < -tol:
                continue
            val = float(0.5 * x @ h @ x + f @ x)
            if val < best_val - 1e-14:
                best_val = val
                best_x = x
    if best_x is None:
        raise AssertionError("no KKT point found; oracle inputs were infeasible")
    return best_val, best_x


# -- obstacle geometry -----------------------------------------------------

FACE_NORMALS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def g_face_formula(pos: np.ndarray, center: np.ndarray, half: float) -> float:
    """Obstacle measure via the four half-plane faces of the square.

    Value of the face form min_j [half + h_j . (pos - center)]+ with outward
    unit normals h_j: zero outside the square, the depth of penetration
    inside it.
    """
    offsets = FACE_NORMALS @ (np.asarray(pos, dtype=float) - np.asarray(center, dtype=float))
    return float(np.min(np.maximum(half + offsets, 0.0)))
