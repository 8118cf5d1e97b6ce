"""Problem data for the constrained double-integrator navigation task.

A scenario bundles linear dynamics, a quadratic stage cost centred on the
goal state, box constraints on states and inputs, and a disturbance-shifted
box obstacle. The obstacle constraint value g(x, w) is zero outside the
obstacle and grows linearly toward its centre, so "risk of collision" is the
worst-case CVaR of g over the disturbance atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .distributions import SupportGrid

# Outward normals of the four axis-aligned faces, in tie-break order.
FACES = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


@dataclass(frozen=True)
class LinearDynamics:
    """x+ = a x + b u."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("a must be square")
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError("b must have one row per state")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.a @ x + self.b @ u


@dataclass(frozen=True)
class QuadraticStageCost:
    """r(x, u) = (x - x_ref)' q (x - x_ref) + u' r u."""

    q: np.ndarray
    r: np.ndarray
    x_ref: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        r = np.asarray(self.r, dtype=float)
        x_ref = np.asarray(self.x_ref, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("q must be square")
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("r must be square")
        if x_ref.shape != (q.shape[0],):
            raise ValueError("x_ref must match the state dimension")
        if np.any(np.abs(q - q.T) > 1e-12) or np.any(np.abs(r - r.T) > 1e-12):
            raise ValueError("cost matrices must be symmetric")
        if np.min(np.linalg.eigvalsh(q)) < -1e-12:
            raise ValueError("q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(r)) <= 0.0:
            raise ValueError("r must be positive definite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x_ref", x_ref)

    def stage(self, x: np.ndarray, u: np.ndarray) -> float:
        dx = x - self.x_ref
        return float(dx @ self.q @ dx + u @ self.r @ u)


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box lower <= v <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("bounds must be vectors of equal length")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, v: np.ndarray, tol: float = 1e-8) -> bool:
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def violation(self, v: np.ndarray) -> float:
        return float(
            max(
                np.max(self.lower - v, initial=0.0),
                np.max(v - self.upper, initial=0.0),
            )
        )


@dataclass(frozen=True)
class ObstacleModel:
    """Square obstacle of half-width ``half`` whose centre shifts with w.

    The centre under disturbance w is ``base + direction * w``; the
    constraint value at position p is [half - |p - centre|_inf]+ so it peaks
    at ``half`` in the middle of the box and vanishes on and outside the
    boundary.
    """

    base: np.ndarray
    direction: np.ndarray
    half: float

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if base.shape != (2,) or direction.shape != (2,):
            raise ValueError("base and direction must be planar vectors")
        if not self.half > 0:
            raise ValueError("half-width must be positive")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "half", float(self.half))

    def centers(self, w: np.ndarray) -> np.ndarray:
        """Obstacle centres for a batch of disturbance values, shape (L, 2)."""
        w = np.asarray(w, dtype=float)
        return self.base[None, :] + w[:, None] * self.direction[None, :]

    def g_single(self, px: float, py: float, cx: float, cy: float) -> float:
        return float(max(self.half - max(abs(px - cx), abs(py - cy)), 0.0))

    def active_face(self, px: float, py: float, cx: float, cy: float) -> int:
        """Index of the face normal attaining |p - centre|_inf (lowest wins ties)."""
        d = np.array([px - cx, py - cy])
        scores = FACES @ d
        return int(np.argmax(scores))


@dataclass(frozen=True)
class Scenario:
    """Complete description of one navigation problem instance."""

    dynamics: LinearDynamics
    cost: QuadraticStageCost
    state_box: BoxSet
    input_box: BoxSet
    obstacle: ObstacleModel
    support: SupportGrid
    x_start: np.ndarray
    x_goal: np.ndarray
    centers_x: np.ndarray = field(init=False, repr=False, compare=False)
    centers_y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x_start = np.asarray(self.x_start, dtype=float)
        x_goal = np.asarray(self.x_goal, dtype=float)
        n = self.dynamics.n_states
        if x_start.shape != (n,) or x_goal.shape != (n,):
            raise ValueError("start and goal states must match the state dimension")
        if self.state_box.dim != n or self.input_box.dim != self.dynamics.n_inputs:
            raise ValueError("box dimensions must match the dynamics")
        if not self.state_box.contains(x_start) or not self.state_box.contains(x_goal):
            raise ValueError("start and goal must lie inside the state box")
        if np.max(np.abs(self.dynamics.a @ x_goal - x_goal)) > 1e-9:
            raise ValueError("the goal state must be an equilibrium of a (zero input)")
        if not np.allclose(self.cost.x_ref, x_goal):
            raise ValueError("the stage cost must be centred on the goal state")
        object.__setattr__(self, "x_start", x_start)
        object.__setattr__(self, "x_goal", x_goal)
        centers = self.obstacle.centers(self.support.points)
        object.__setattr__(self, "centers_x", np.ascontiguousarray(centers[:, 0]))
        object.__setattr__(self, "centers_y", np.ascontiguousarray(centers[:, 1]))

    @property
    def n_states(self) -> int:
        return self.dynamics.n_states

    @property
    def n_inputs(self) -> int:
        return self.dynamics.n_inputs

    def position(self, x: np.ndarray) -> np.ndarray:
        return x[:2]

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.dynamics.step(x, u)

    def stage_cost(self, x: np.ndarray, u: np.ndarray) -> float:
        return self.cost.stage(x, u)

    def risk_values(self, x: np.ndarray) -> np.ndarray:
        """Constraint values g(x, w_l) across all disturbance atoms."""
        return kernels.g_values(float(x[0]), float(x[1]), self.centers_x, self.centers_y, self.obstacle.half)

    def collision(self, x: np.ndarray, w_index: int) -> bool:
        """Whether the realized disturbance atom puts x inside the obstacle."""
        return (
            self.obstacle.g_single(
                float(x[0]), float(x[1]), self.centers_x[w_index], self.centers_y[w_index]
            )
            > 0.0
        )

    def rollout(self, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """States visited by applying ``inputs`` from ``x0``; shape (K+1, n)."""
        inputs = np.asarray(inputs, dtype=float)
        states = np.zeros((inputs.shape[0] + 1, self.n_states))
        states[0] = x0
        for k in range(inputs.shape[0]):
            states[k + 1] = self.step(states[k], inputs[k])
        return states
