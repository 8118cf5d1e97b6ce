"""Hot numerical loops: simplex pivoting, CVaR scans, obstacle penetrations.

Each kernel exists twice: a plain-Python/numpy implementation and a numba
``@njit`` twin compiled from loop code that performs the identical elementary
operations in the identical order. Either twin therefore returns bitwise
identical results; which one is bound to the public names is decided by
:mod:`drilmpc.backend`. ``IMPLEMENTATIONS`` exposes both variants for the
equivalence tests and the benchmark script.
"""

from __future__ import annotations

import numpy as np

from .backend import resolve_backend

SIMPLEX_OPTIMAL = 0
SIMPLEX_UNBOUNDED = 1
SIMPLEX_ITER_LIMIT = 2


def _simplex_pivots_numpy(tableau: np.ndarray, basis: np.ndarray, tol: float, max_iter: int) -> int:
    """Run Bland-rule pivoting on a dense tableau in place.

    ``tableau`` is (m+1, n+1): m constraint rows, a reduced-cost objective row,
    and a trailing right-hand-side column. ``basis`` holds the basic column of
    each constraint row. Entering column: lowest index with reduced cost below
    ``-tol``. Leaving row: minimum ratio, exact ties broken by the lowest basic
    column index. Returns one of the SIMPLEX_* status codes.
    """
    m = tableau.shape[0] - 1
    n = tableau.shape[1] - 1
    for _ in range(max_iter):
        negative = np.flatnonzero(tableau[m, :n] < -tol)
        if negative.size == 0:
            return SIMPLEX_OPTIMAL
        enter = int(negative[0])
        column = tableau[:m, enter]
        eligible = column > tol
        if not eligible.any():
            return SIMPLEX_UNBOUNDED
        ratios = np.full(m, np.inf)
        np.divide(tableau[:m, n], column, out=ratios, where=eligible)
        ties = np.flatnonzero(ratios == ratios.min())
        leave = int(ties[np.argmin(basis[ties])])
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
    return SIMPLEX_ITER_LIMIT


def _simplex_pivots_loops(tableau, basis, tol, max_iter):
    m = tableau.shape[0] - 1
    n = tableau.shape[1] - 1
    for _ in range(max_iter):
        enter = -1
        for j in range(n):
            if tableau[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return 0
        leave = -1
        best = np.inf
        for i in range(m):
            coeff = tableau[i, enter]
            if coeff > tol:
                ratio = tableau[i, n] / coeff
                if ratio < best or (ratio == best and (leave < 0 or basis[i] < basis[leave])):
                    best = ratio
                    leave = i
        if leave < 0:
            return 1
        pivot = tableau[leave, enter]
        for j in range(n + 1):
            tableau[leave, j] /= pivot
        tableau[leave, enter] = 1.0
        for i in range(m + 1):
            if i == leave:
                continue
            factor = tableau[i, enter]
            for j in range(n + 1):
                tableau[i, j] -= factor * tableau[leave, j]
            tableau[i, enter] = 0.0
        tableau[leave, enter] = 1.0
        basis[leave] = enter
    return 2


def _cvar_scan_numpy(values: np.ndarray, probs: np.ndarray, inv_beta: float) -> float:
    """Minimum over atom candidates t of ``t + inv_beta * E[(Z - t)+]``.

    For a finite distribution the infimum of the CVaR objective is attained at
    a support value, so scanning the atoms is exact. Inner expectations are
    accumulated strictly left to right (cumsum) to mirror the loop twin.
    """
    diffs = values[None, :] - values[:, None]
    contrib = np.where(diffs > 0.0, probs[None, :] * diffs, 0.0)
    tails = np.cumsum(contrib, axis=1)[:, -1]
    return float(np.min(values + inv_beta * tails))


def _cvar_scan_loops(values, probs, inv_beta):
    n = values.shape[0]
    best = np.inf
    for i in range(n):
        t = values[i]
        acc = 0.0
        for k in range(n):
            diff = values[k] - t
            if diff > 0.0:
                acc += probs[k] * diff
            else:
                acc += 0.0
        objective = t + inv_beta * acc
        if objective < best:
            best = objective
    return best


def _g_values_numpy(px: float, py: float, cx: np.ndarray, cy: np.ndarray, half: float) -> np.ndarray:
    """Penetration of position (px, py) into axis-aligned squares.

    Squares have centers (cx[i], cy[i]) and half side ``half``. The value is
    ``half`` minus the sup-norm offset from the center, clamped at zero: zero
    on and outside the square boundary, ``half`` at the center.
    """
    dx = np.abs(px - cx)
    dy = np.abs(py - cy)
    return np.maximum(half - np.maximum(dx, dy), 0.0)


def _g_values_loops(px, py, cx, cy, half):
    n = cx.shape[0]
    out = np.empty(n)
    for i in range(n):
        dx = np.abs(px - cx[i])
        dy = np.abs(py - cy[i])
        off = np.maximum(dx, dy)
        out[i] = np.maximum(half - off, 0.0)
    return out


def _compile_numba():
    from numba import njit

    jit = njit(cache=True, fastmath=False)
    return {
        "simplex_pivots": jit(_simplex_pivots_loops),
        "cvar_scan": jit(_cvar_scan_loops),
        "g_values": jit(_g_values_loops),
    }


_NUMPY_IMPLS = {
    "simplex_pivots": _simplex_pivots_numpy,
    "cvar_scan": _cvar_scan_numpy,
    "g_values": _g_values_numpy,
}

ACTIVE_BACKEND = resolve_backend()
if ACTIVE_BACKEND == "numba":
    _NUMBA_IMPLS = _compile_numba()
    IMPLEMENTATIONS = {"numba": _NUMBA_IMPLS, "numpy": _NUMPY_IMPLS}
else:
    IMPLEMENTATIONS = {"numpy": _NUMPY_IMPLS}

simplex_pivots = IMPLEMENTATIONS[ACTIVE_BACKEND]["simplex_pivots"]
cvar_scan = IMPLEMENTATIONS[ACTIVE_BACKEND]["cvar_scan"]
g_values = IMPLEMENTATIONS[ACTIVE_BACKEND]["g_values"]
