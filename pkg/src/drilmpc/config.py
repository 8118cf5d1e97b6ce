"""Experiment configuration: defaults, file loading, validation.

Configurations describe the full experiment: plant matrices, boxes, obstacle
geometry, disturbance model, risk budget, ambiguity schedule, and run
lengths. Files may be TOML or JSON; keys mirror the dataclass fields and
unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .distributions import DiscreteDistribution, SupportGrid, beta_binomial
from .ocp import BoxSet, LinearDynamics, ObstacleModel, QuadraticStageCost, Scenario


def _default_a() -> list[list[float]]:
    return [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]


def _default_b() -> list[list[float]]:
    return [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs for one experiment run."""

    # Plant and objective.
    a: list = field(default_factory=_default_a)
    b: list = field(default_factory=_default_b)
    q_diag: list = field(default_factory=lambda: [1.0, 1.0, 0.01, 0.01])
    r_diag: list = field(default_factory=lambda: [0.01, 0.01])
    x_start: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    x_goal: list = field(default_factory=lambda: [5.0, 3.0, 0.0, 0.0])
    state_lower: list = field(default_factory=lambda: [-1.0, -1.0, -2.0, -2.0])
    state_upper: list = field(default_factory=lambda: [6.0, 6.0, 2.0, 2.0])
    input_lower: list = field(default_factory=lambda: [-1.0, -1.0])
    input_upper: list = field(default_factory=lambda: [1.0, 1.0])

    # Obstacle geometry.
    obstacle_base: list = field(default_factory=lambda: [2.0, 2.0])
    obstacle_direction: list = field(default_factory=lambda: [1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)])
    obstacle_half: float = 0.2

    # Disturbance model: beta-binomial counts mapped onto an even grid.
    support_low: float = -0.5
    support_high: float = 0.5
    support_count: int = 15
    dist_trials: int = 14
    dist_alpha: float = 10.0
    dist_beta: float = 15.0

    # Risk budget and ambiguity schedule.
    beta: float = 0.05
    delta: float = 0.02
    theta: float | list = 5e-4

    # Run lengths.
    horizon: int = 5
    n_initial: int = 5
    iterations: int = 20
    seed: int = 1
    eps_term: float = 1e-2
    t_max: int = 500
    tol_feas: float = 1e-6
    freeze_dataset: bool = False

    # Seed trajectory waypoints between start and goal positions.
    seed_waypoints: list = field(default_factory=lambda: [[3.0, 0.5]])
    seed_segment_steps: int = 8

    def theta_at(self, j: int) -> float:
        """Ambiguity radius used to build the set after iteration j."""
        if isinstance(self.theta, (int, float)):
            return float(self.theta)
        sched = list(self.theta)
        return float(sched[min(j, len(sched) - 1)])

    def validate(self) -> None:
        if not 1e-6 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [1e-6, 1]")
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")
        thetas = [self.theta] if isinstance(self.theta, (int, float)) else list(self.theta)
        if not thetas:
            raise ValueError("theta schedule must be nonempty")
        for value in thetas:
            if not 0.0 <= float(value) <= 1.0:
                raise ValueError("theta must lie in [0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.n_initial < 1:
            raise ValueError("n_initial must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.support_count != self.dist_trials + 1:
            raise ValueError("support_count must equal dist_trials + 1")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if not self.eps_term > 0.0:
            raise ValueError("eps_term must be positive")
        if not self.tol_feas > 0.0:
            raise ValueError("tol_feas must be positive")


def config_from_dict(data: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = ExperimentConfig(**data)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    elif path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    else:
        raise ValueError(f"unsupported config format: {path.suffix!r} (use .toml or .json)")
    return config_from_dict(data)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    out = replace(cfg, **overrides)
    out.validate()
    return out


def build_support(cfg: ExperimentConfig) -> SupportGrid:
    return SupportGrid.uniform(cfg.support_low, cfg.support_high, cfg.support_count)


def build_true_distribution(cfg: ExperimentConfig) -> DiscreteDistribution:
    return beta_binomial(build_support(cfg), cfg.dist_trials, cfg.dist_alpha, cfg.dist_beta)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    dynamics = LinearDynamics(np.asarray(cfg.a, dtype=float), np.asarray(cfg.b, dtype=float))
    cost = QuadraticStageCost(
        np.diag(np.asarray(cfg.q_diag, dtype=float)),
        np.diag(np.asarray(cfg.r_diag, dtype=float)),
        np.asarray(cfg.x_goal, dtype=float),
    )
    return Scenario(
        dynamics=dynamics,
        cost=cost,
        state_box=BoxSet(np.asarray(cfg.state_lower, dtype=float), np.asarray(cfg.state_upper, dtype=float)),
        input_box=BoxSet(np.asarray(cfg.input_lower, dtype=float), np.asarray(cfg.input_upper, dtype=float)),
        obstacle=ObstacleModel(
            np.asarray(cfg.obstacle_base, dtype=float),
            np.asarray(cfg.obstacle_direction, dtype=float),
            cfg.obstacle_half,
        ),
        support=build_support(cfg),
        x_start=np.asarray(cfg.x_start, dtype=float),
        x_goal=np.asarray(cfg.x_goal, dtype=float),
    )
