"""Iterative learning driver.

One experiment starts from a conservative seed trajectory and an empirical
ambiguity set built from a handful of disturbance observations, then repeats:
run the controller to the goal under the current ambiguity set, fold the
fresh observations into the empirical distribution, rebuild the ambiguity
set at the scheduled radius, store the new trajectory, and prune stored
trajectories that the tightened set no longer certifies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_scenario, build_true_distribution
from .distributions import DiscreteDistribution, SampleSet
from .mpc import ClosedLoopTrajectory, RiskChecker, dr_mpc
from .ocp import Scenario
from .risk import AmbiguitySet, cvar
from .safeset import SafeSet


def build_seed_trajectory(scenario: Scenario, cfg: ExperimentConfig) -> ClosedLoopTrajectory:
    """Rest-to-rest bang-bang trajectory through the configured waypoints.

    Each leg accelerates at a constant rate for half its steps and brakes at
    the opposite rate for the other half, so it starts and ends at zero
    velocity. With power-of-two step counts the required accelerations are
    exact binary fractions and the rollout lands on the goal bitwise.
    """
    steps = int(cfg.seed_segment_steps)
    if steps < 2 or steps % 2:
        raise ValueError("seed_segment_steps must be a positive even number")
    half = steps // 2
    waypoints = [np.asarray(w, dtype=float) for w in cfg.seed_waypoints]
    points = [scenario.x_start[:2]] + waypoints + [scenario.x_goal[:2]]

    inputs = []
    for begin, end in zip(points[:-1], points[1:]):
        accel = (end - begin) / float(half * half)
        inputs.extend([accel] * half)
        inputs.extend([-accel] * half)
    inputs = np.asarray(inputs)
    states = scenario.rollout(scenario.x_start, inputs)

    horizon = inputs.shape[0]
    if np.any(states[horizon] != scenario.x_goal):
        raise ValueError("seed trajectory does not land exactly on the goal")
    for t in range(horizon + 1):
        if not scenario.state_box.contains(states[t]):
            raise ValueError(f"seed state at step {t} violates the state box")
        if t < horizon and not scenario.input_box.contains(inputs[t]):
            raise ValueError(f"seed input at step {t} violates the input box")
        if float(scenario.risk_values(states[t]).max()) > cfg.delta:
            raise ValueError(f"seed state at step {t} is not robustly safe")

    stage_costs = np.array([scenario.stage_cost(states[t], inputs[t]) for t in range(horizon)])
    return ClosedLoopTrajectory(
        states=states,
        inputs=inputs,
        sample_indices=np.full(horizon, -1, dtype=np.int64),
        stage_costs=stage_costs,
        collisions=np.zeros(horizon, dtype=bool),
        j_values=np.zeros(0),
        shift_feasible=np.zeros(0, dtype=bool),
        prefix_feasible=True,
        start_risk_ok=True,
        solve_steps=0,
        steering_steps=0,
    )


@dataclass
class IterationRecord:
    """Everything observed during one learning iteration."""

    index: int
    trajectory: ClosedLoopTrajectory
    theta: float
    new_sample_indices: np.ndarray
    total_samples: int
    empirical_probs: np.ndarray
    removed_iters: tuple[int, ...]
    live_iters: tuple[int, ...]
    true_dist_safe: bool


@dataclass
class ExperimentResult:
    """Seed, per-iteration records, and final learned objects."""

    config: ExperimentConfig
    seed_trajectory: ClosedLoopTrajectory
    initial_sample_indices: np.ndarray
    records: list[IterationRecord]
    safe_set: SafeSet
    samples: SampleSet
    ambiguity: AmbiguitySet

    @property
    def j_at_start(self) -> list[float]:
        """First-solve objective of each iteration: the certified cost-to-go."""
        return [float(rec.trajectory.j_values[0]) for rec in self.records]

    @property
    def realized_costs(self) -> list[float]:
        return [rec.trajectory.realized_cost for rec in self.records]


def run_iteration(
    scenario: Scenario,
    safe_set: SafeSet,
    samples: SampleSet,
    amb: AmbiguitySet,
    true_dist: DiscreteDistribution,
    cfg: ExperimentConfig,
    iteration: int,
    rng: np.random.Generator,
) -> tuple[SafeSet, SampleSet, AmbiguitySet, IterationRecord]:
    """One learning pass: control, observe, tighten, store, prune."""
    traj = dr_mpc(
        scenario,
        safe_set,
        amb,
        true_dist,
        cfg.beta,
        cfg.delta,
        cfg.horizon,
        rng,
        eps_term=cfg.eps_term,
        t_max=cfg.t_max,
        tol_feas=cfg.tol_feas,
    )

    if cfg.freeze_dataset:
        new_samples = samples
        new_indices = np.zeros(0, dtype=np.int64)
    else:
        new_indices = traj.sample_indices
        new_samples = samples.extend(new_indices)

    theta = cfg.theta_at(iteration)
    new_amb = AmbiguitySet(new_samples.empirical(), theta)

    grown = safe_set.append(iteration, traj.pairs())
    checker = RiskChecker(scenario, new_amb, cfg.beta)
    pruned, removed = grown.prune(lambda state: checker.satisfied(state, cfg.delta, cfg.tol_feas))

    record = IterationRecord(
        index=iteration,
        trajectory=traj,
        theta=theta,
        new_sample_indices=new_indices,
        total_samples=new_samples.size,
        empirical_probs=new_amb.center.probs.copy(),
        removed_iters=removed,
        live_iters=pruned.live_iters,
        true_dist_safe=trajectory_true_dist_safe(scenario, traj, true_dist, cfg.beta, cfg.delta),
    )
    return pruned, new_samples, new_amb, record


def trajectory_true_dist_safe(
    scenario: Scenario,
    traj: ClosedLoopTrajectory,
    true_dist: DiscreteDistribution,
    beta: float,
    delta: float,
) -> bool:
    """Whether every visited state meets the CVaR budget under the true law."""
    for t in range(traj.horizon + 1):
        value = cvar(scenario.risk_values(traj.states[t]), true_dist, beta)
        if value > delta + 1e-9:
            return False
    return True


def save_checkpoint(path: Path, iteration: int, safe_set: SafeSet, samples: SampleSet, rng: np.random.Generator) -> None:
    """Persist everything needed to resume after ``iteration``."""
    payload = {
        "iteration": iteration,
        "safe_set_lines": safe_set.to_lines(),
        "sample_indices": [int(i) for i in samples.indices],
        "rng_state": rng.bit_generator.state,
    }
    path.write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: Path, scenario: Scenario) -> tuple[int, SafeSet, SampleSet, np.random.Generator]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    safe_set = SafeSet.from_lines(scenario.x_goal, payload["safe_set_lines"])
    samples = SampleSet(scenario.support, np.asarray(payload["sample_indices"], dtype=np.int64))
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    return int(payload["iteration"]), safe_set, samples, rng


def run_experiment(cfg: ExperimentConfig, checkpoint_dir: str | Path | None = None) -> ExperimentResult:
    """Full learning run: seed, initial observations, then all iterations.

    With ``checkpoint_dir`` set, the state after every iteration is saved so
    an interrupted run can be resumed with :func:`resume_experiment`.
    """
    cfg.validate()
    scenario = build_scenario(cfg)
    true_dist = build_true_distribution(cfg)
    rng = np.random.default_rng(cfg.seed)

    seed_traj = build_seed_trajectory(scenario, cfg)
    safe_set = SafeSet(scenario.x_goal).append(0, seed_traj.pairs())

    initial_indices = true_dist.sample_indices(rng, cfg.n_initial)
    samples = SampleSet(scenario.support, initial_indices)
    amb = AmbiguitySet(samples.empirical(), cfg.theta_at(0))

    records: list[IterationRecord] = []
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint_dir / "checkpoint_000.json", 0, safe_set, samples, rng)
    for j in range(1, cfg.iterations + 1):
        safe_set, samples, amb, record = run_iteration(
            scenario, safe_set, samples, amb, true_dist, cfg, j, rng
        )
        records.append(record)
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_dir / f"checkpoint_{j:03d}.json", j, safe_set, samples, rng)

    return ExperimentResult(
        config=cfg,
        seed_trajectory=seed_traj,
        initial_sample_indices=initial_indices,
        records=records,
        safe_set=safe_set,
        samples=samples,
        ambiguity=amb,
    )


def resume_experiment(cfg: ExperimentConfig, checkpoint_path: str | Path) -> tuple[list[IterationRecord], SafeSet, SampleSet, AmbiguitySet]:
    """Continue a checkpointed run through the remaining iterations.

    Returns only the records produced after the checkpoint; the caller keeps
    responsibility for stitching full reports together.
    """
    cfg.validate()
    scenario = build_scenario(cfg)
    true_dist = build_true_distribution(cfg)
    start, safe_set, samples, rng = load_checkpoint(Path(checkpoint_path), scenario)
    amb = AmbiguitySet(samples.empirical(), cfg.theta_at(start))
    records: list[IterationRecord] = []
    for j in range(start + 1, cfg.iterations + 1):
        safe_set, samples, amb, record = run_iteration(
            scenario, safe_set, samples, amb, true_dist, cfg, j, rng
        )
        records.append(record)
    return records, safe_set, samples, amb
