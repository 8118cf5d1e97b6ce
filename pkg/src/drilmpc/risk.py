"""Risk measures over finitely supported distributions.

Provides CVaR/VaR under a fixed distribution and the worst-case CVaR over a
total-variation ambiguity ball. The worst case is computed two independent
ways: a dual linear program (the production route, which also yields the
worst-case tail weights) and a primal linear program over the pair
(distribution, tail measure) kept solely as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .distributions import DiscreteDistribution
from .linprog import LpProblem, lp_solve

TOL_FEAS = 1e-6


@dataclass(frozen=True)
class AmbiguitySet:
    """Total-variation ball of radius ``radius`` around ``center``."""

    center: DiscreteDistribution
    radius: float

    def __post_init__(self):
        r = float(self.radius)
        if not 0.0 <= r <= 1.0:
            raise ValueError("ambiguity radius must lie in [0, 1]")
        object.__setattr__(self, "radius", r)

    @property
    def size(self) -> int:
        return self.center.size


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    return beta


def _check_values(values: np.ndarray, size: int) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=float)
    if v.shape != (size,):
        raise ValueError(f"values must have shape {(size,)}, got {v.shape}")
    return v


def cvar(values: np.ndarray, dist: DiscreteDistribution, beta: float) -> float:
    """Conditional value-at-risk at level ``beta``.

    Computed as min over thresholds t of t + E[(Z - t)+]/beta; the minimum is
    attained at a support atom, so scanning atoms is exact. At beta = 1 this
    reduces to the mean.
    """
    beta = _check_beta(beta)
    v = _check_values(values, dist.size)
    return float(kernels.cvar_scan(v, dist.probs, 1.0 / beta))


def var(values: np.ndarray, dist: DiscreteDistribution, beta: float) -> float:
    """Value-at-risk: the smallest attained value z with P(Z <= z) >= 1 - beta."""
    beta = _check_beta(beta)
    v = _check_values(values, dist.size)
    order = np.argsort(v, kind="stable")
    cdf = np.cumsum(dist.probs[order])
    threshold = (1.0 - beta) - 1e-12
    pos = int(np.searchsorted(cdf, threshold, side="left"))
    pos = min(pos, v.size - 1)
    return float(v[order[pos]])


def _dual_problem(values: np.ndarray, amb: AmbiguitySet, beta: float) -> LpProblem:
    """Dual LP whose optimum equals the worst-case CVaR.

    Variables are ordered [lam, eta, nu, g1 (L), g2 (L), s (L)]; the tail
    weights of the worst-case distribution appear as the multipliers of the
    eta + s_l >= v_l rows.
    """
    L = values.size
    theta = amb.radius
    p = amb.center.probs
    n = 3 + 3 * L
    c = np.zeros(n)
    c[0] = 2.0 * theta
    c[1] = 1.0
    c[2] = 1.0
    c[3 : 3 + L] = p
    c[3 + L : 3 + 2 * L] = -p

    a_ub = np.zeros((3 * L, n))
    b_ub = np.zeros(3 * L)
    idx_g1 = 3 + np.arange(L)
    idx_g2 = 3 + L + np.arange(L)
    idx_s = 3 + 2 * L + np.arange(L)
    rows_a = np.arange(L)
    a_ub[rows_a, idx_g1] = -beta
    a_ub[rows_a, idx_g2] = beta
    a_ub[rows_a, 2] = -beta
    a_ub[rows_a, idx_s] = 1.0
    rows_b = L + np.arange(L)
    a_ub[rows_b, 1] = -1.0
    a_ub[rows_b, idx_s] = -1.0
    b_ub[rows_b] = -values
    rows_c = 2 * L + np.arange(L)
    a_ub[rows_c, idx_g1] = 1.0
    a_ub[rows_c, idx_g2] = 1.0
    a_ub[rows_c, 0] = -1.0

    lower = np.zeros(n)
    lower[1] = -np.inf
    lower[2] = -np.inf
    return LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, lower=lower)


def worst_case_cvar_full(
    values: np.ndarray, amb: AmbiguitySet, beta: float
) -> tuple[float, np.ndarray]:
    """Worst-case CVaR over the ambiguity ball and the attaining tail weights.

    The returned weights q satisfy q >= 0 and sum(q) = 1, the worst case
    equals q . values, and q_l is the sensitivity of the worst case to
    value entry l, which makes q the natural weight vector for chaining
    subgradients through the value map.
    """
    beta = _check_beta(beta)
    v = _check_values(values, amb.size)
    sol = lp_solve(_dual_problem(v, amb, beta))
    if sol.status != "optimal":
        raise RuntimeError(f"worst-case CVaR dual program terminated {sol.status}")
    L = v.size
    q = sol.dual_ub[L : 2 * L].copy()
    q = np.clip(q, 0.0, None)
    total = q.sum()
    if total > 0:
        q = q / total
    return float(sol.value), q


def worst_case_cvar(values: np.ndarray, amb: AmbiguitySet, beta: float) -> float:
    """Worst-case CVaR over the ambiguity ball (dual route)."""
    return worst_case_cvar_full(values, amb, beta)[0]


def worst_case_cvar_primal(values: np.ndarray, amb: AmbiguitySet, beta: float) -> float:
    """Worst-case CVaR via the primal program over (q, mu, a, b).

    Maximizes q . values subject to sum(q) = 1, beta q <= mu,
    mu - p = a - b with sum(a + b) <= 2 theta, everything nonnegative.
    Kept independent of the dual route for cross-checking.
    """
    beta = _check_beta(beta)
    v = _check_values(values, amb.size)
    L = v.size
    p = amb.center.probs
    theta = amb.radius
    n = 4 * L
    sl = slice(0, L)
    c = np.zeros(n)
    c[sl] = -v

    a_ub = np.zeros((L + 1, n))
    b_ub = np.zeros(L + 1)
    rows = np.arange(L)
    a_ub[rows, rows] = beta
    a_ub[rows, L + rows] = -1.0
    a_ub[L, 2 * L :] = 1.0
    b_ub[L] = 2.0 * theta

    a_eq = np.zeros((L + 2, n))
    b_eq = np.zeros(L + 2)
    a_eq[0, sl] = 1.0
    b_eq[0] = 1.0
    a_eq[1 + rows, L + rows] = 1.0
    a_eq[1 + rows, 2 * L + rows] = -1.0
    a_eq[1 + rows, 3 * L + rows] = 1.0
    b_eq[1 + rows] = p
    a_eq[L + 1, L : 2 * L] = 1.0
    b_eq[L + 1] = 1.0

    sol = lp_solve(LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq, lower=np.zeros(n)))
    if sol.status != "optimal":
        raise RuntimeError(f"worst-case CVaR primal program terminated {sol.status}")
    return -float(sol.value)


def dr_risk_satisfied(
    values: np.ndarray,
    amb: AmbiguitySet,
    beta: float,
    delta: float,
    tol: float = TOL_FEAS,
) -> bool:
    """Whether the worst-case CVaR of ``values`` stays within ``delta``."""
    return worst_case_cvar(values, amb, beta) <= delta + tol
