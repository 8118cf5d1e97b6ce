"""Finitely supported disturbance models.

Disturbances live on a fixed grid of atoms. A distribution is a probability
vector over that grid; sample batches are stored as atom indices so that
empirical estimation and resampling stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12


@dataclass(frozen=True)
class SupportGrid:
    """Ordered atoms of the disturbance space."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("support grid must be a nonempty vector")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("support grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.size

    @classmethod
    def uniform(cls, low: float, high: float, count: int) -> "SupportGrid":
        """Evenly spaced atoms; a single-atom grid sits at the midpoint."""
        if count < 1:
            raise ValueError("count must be positive")
        if count == 1:
            return cls(np.array([(low + high) / 2.0]))
        return cls(np.linspace(low, high, count))


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over a support grid."""

    support: SupportGrid
    probs: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.support.size,):
            raise ValueError("probs must match the support size")
        if np.any(p < -PROB_TOL):
            raise ValueError("probabilities must be nonnegative")
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"probabilities must sum to one, got {total!r}")
        p = p / total
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "_cdf", np.cumsum(p))

    @property
    def size(self) -> int:
        return self.support.size

    def mean(self) -> float:
        return float(self.probs @ self.support.points)

    def sample_indices(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw atom indices by inverse-CDF lookup."""
        u = rng.random(count)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.clip(idx, 0, self.size - 1).astype(np.int64)

    def sample_values(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.support.points[self.sample_indices(rng, count)]


def beta_binomial(support: SupportGrid, trials: int, alpha: float, beta: float) -> DiscreteDistribution:
    """Beta-binomial pmf over ``trials + 1`` outcomes mapped onto the grid atoms.

    The grid must have exactly ``trials + 1`` atoms; atom ``i`` receives the
    probability of ``i`` successes.
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    if alpha <= 0 or beta <= 0:
        raise ValueError("shape parameters must be positive")
    if support.size != trials + 1:
        raise ValueError("support size must equal trials + 1")
    n = trials
    log_norm = math.lgamma(alpha + beta) - math.lgamma(alpha) - math.lgamma(beta)
    probs = np.empty(n + 1)
    for i in range(n + 1):
        log_comb = math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
        log_beta = (
            math.lgamma(i + alpha)
            + math.lgamma(n - i + beta)
            - math.lgamma(n + alpha + beta)
        )
        probs[i] = math.exp(log_comb + log_beta + log_norm)
    return DiscreteDistribution(support, probs / probs.sum())


@dataclass(frozen=True)
class SampleSet:
    """Accumulated disturbance observations, stored as atom indices."""

    support: SupportGrid
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be a vector")
        if idx.size and (idx.min() < 0 or idx.max() >= self.support.size):
            raise ValueError("sample index outside the support grid")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return self.indices.size

    def values(self) -> np.ndarray:
        return self.support.points[self.indices]

    def extend(self, new_indices: np.ndarray) -> "SampleSet":
        return SampleSet(self.support, np.concatenate([self.indices, np.asarray(new_indices, dtype=np.int64)]))

    def empirical(self) -> DiscreteDistribution:
        """Relative atom frequencies as a distribution."""
        if self.size == 0:
            raise ValueError("cannot form an empirical distribution from zero samples")
        counts = np.bincount(self.indices, minlength=self.support.size)
        return DiscreteDistribution(self.support, counts / self.size)


def tv_distance(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Total-variation distance, half the l1 difference of the pmfs."""
    if p.support.size != q.support.size or not np.array_equal(p.support.points, q.support.points):
        raise ValueError("distributions must share a support grid")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())
