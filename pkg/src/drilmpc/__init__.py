"""Distributionally robust, risk-constrained iterative MPC simulator.

The package simulates a linear agent that learns to navigate past a
disturbance-shifted obstacle over repeated tries: each try runs a receding
horizon controller whose terminal set is the collection of previously
visited, still-certified states, and whose obstacle constraint holds for the
worst-case CVaR over a total-variation ball around the empirical disturbance
distribution.
"""

from .backend import requested_backend, resolve_backend
from .config import ExperimentConfig, build_scenario, build_true_distribution, load_config, with_overrides
from .distributions import DiscreteDistribution, SampleSet, SupportGrid, beta_binomial, tv_distance
from .iterate import (
    ExperimentResult,
    IterationRecord,
    build_seed_trajectory,
    load_checkpoint,
    resume_experiment,
    run_experiment,
    run_iteration,
    save_checkpoint,
    trajectory_true_dist_safe,
)
from .linprog import LpProblem, LpSolution, SimplexIterationError, kkt_residuals, lp_solve
from .mpc import (
    ClosedLoopTrajectory,
    FhpSolution,
    InfeasibleProblemError,
    RiskChecker,
    dr_mpc,
    lyapunov_violation,
    prefix_incumbents,
    shift_incumbent,
    solve_fhp,
)
from .ocp import BoxSet, LinearDynamics, ObstacleModel, QuadraticStageCost, Scenario
from .qp import QpIterationError, QpSolution, solve_qp
from .risk import (
    AmbiguitySet,
    cvar,
    dr_risk_satisfied,
    var,
    worst_case_cvar,
    worst_case_cvar_full,
    worst_case_cvar_primal,
)
from .safeset import SafeSet, SafeSetEntry, state_key

__version__ = "0.1.0"

__all__ = [
    "AmbiguitySet",
    "BoxSet",
    "ClosedLoopTrajectory",
    "DiscreteDistribution",
    "ExperimentConfig",
    "ExperimentResult",
    "FhpSolution",
    "InfeasibleProblemError",
    "IterationRecord",
    "LinearDynamics",
    "LpProblem",
    "LpSolution",
    "ObstacleModel",
    "QpIterationError",
    "QpSolution",
    "QuadraticStageCost",
    "RiskChecker",
    "SafeSet",
    "SafeSetEntry",
    "SampleSet",
    "Scenario",
    "SimplexIterationError",
    "SupportGrid",
    "beta_binomial",
    "build_scenario",
    "build_seed_trajectory",
    "build_true_distribution",
    "cvar",
    "dr_mpc",
    "dr_risk_satisfied",
    "kkt_residuals",
    "load_checkpoint",
    "load_config",
    "lp_solve",
    "lyapunov_violation",
    "prefix_incumbents",
    "requested_backend",
    "resolve_backend",
    "resume_experiment",
    "run_experiment",
    "run_iteration",
    "save_checkpoint",
    "shift_incumbent",
    "solve_fhp",
    "solve_qp",
    "state_key",
    "trajectory_true_dist_safe",
    "tv_distance",
    "var",
    "with_overrides",
    "worst_case_cvar",
    "worst_case_cvar_full",
    "worst_case_cvar_primal",
]
