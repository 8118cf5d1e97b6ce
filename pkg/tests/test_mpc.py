"""Finite-horizon planner, incumbents, risk checker, and the closed loop."""

import itertools

import numpy as np
import pytest

from drilmpc.config import ExperimentConfig, build_scenario, build_true_distribution
from drilmpc.distributions import DiscreteDistribution, SupportGrid
from drilmpc.iterate import build_seed_trajectory
from drilmpc.mpc import (
    InfeasibleProblemError,
    RiskChecker,
    dr_mpc,
    lyapunov_violation,
    prefix_incumbents,
    reconstruct_input,
    shift_incumbent,
    solve_fhp,
)
from drilmpc.ocp import BoxSet, LinearDynamics, ObstacleModel, QuadraticStageCost, Scenario
from drilmpc.risk import AmbiguitySet, worst_case_cvar_primal
from drilmpc.safeset import SafeSet, state_key
from oracles import qp_active_set_enumeration


@pytest.fixture(scope="module")
def setting():
    cfg = ExperimentConfig()
    scenario = build_scenario(cfg)
    seed_traj = build_seed_trajectory(scenario, cfg)
    safe_set = SafeSet(scenario.x_goal).append(0, seed_traj.pairs())
    true_dist = build_true_distribution(cfg)
    samples = true_dist.sample_indices(np.random.default_rng(cfg.seed), cfg.n_initial)
    counts = np.bincount(samples, minlength=true_dist.size)
    empirical = DiscreteDistribution(true_dist.support, counts / counts.sum())
    amb = AmbiguitySet(empirical, 5e-4)
    checker = RiskChecker(scenario, amb, cfg.beta)
    return cfg, scenario, seed_traj, safe_set, checker


def single_atom_scenario(obstacle_base, x_start):
    """Deterministic variant: one disturbance atom, benchmark dynamics."""
    dynamics = LinearDynamics(
        np.array([[1.0, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]]),
        np.array([[0.0, 0], [0, 0], [1, 0], [0, 1]]),
    )
    goal = np.array([5.0, 2.0, 0.0, 0.0])
    cost = QuadraticStageCost(np.diag([1.0, 1.0, 0.01, 0.01]), np.diag([0.01, 0.01]), goal)
    scenario = Scenario(
        dynamics=dynamics,
        cost=cost,
        state_box=BoxSet(np.array([-1.0, -1, -2, -2]), np.array([6.0, 6, 2, 2])),
        input_box=BoxSet(np.array([-1.0, -1]), np.array([1.0, 1])),
        obstacle=ObstacleModel(np.asarray(obstacle_base), np.array([1.0, -1.0]) / np.sqrt(2), 0.2),
        support=SupportGrid(np.array([0.0])),
        x_start=np.asarray(x_start, dtype=float),
        x_goal=goal,
    )
    dist = DiscreteDistribution(scenario.support, np.array([1.0]))
    return scenario, dist, AmbiguitySet(dist, 0.0)


def append_chain(safe_set, scenario, states, inputs, iteration=0):
    """Store a hand-built dynamically consistent trajectory."""
    for k in range(len(inputs)):
        assert np.allclose(scenario.step(states[k], inputs[k]), states[k + 1], atol=1e-12)
    pairs = [
        (np.asarray(states[k], dtype=float), scenario.stage_cost(np.asarray(states[k], float), np.asarray(inputs[k], float)))
        for k in range(len(inputs))
    ]
    pairs.append((np.asarray(states[-1], dtype=float), 0.0))
    return safe_set.append(iteration, pairs)


def corridor_chain():
    states = [
        [0.0, 2, 0, 0],
        [0.0, 2, 1, 0],
        [1.0, 2, 2, 0],
        [3.0, 2, 1, 0],
        [4.0, 2, 0, 0],
        [4.0, 2, 1, 0],
        [5.0, 2, 0, 0],
    ]
    inputs = [[1.0, 0], [1.0, 0], [-1.0, 0], [-1.0, 0], [1.0, 0], [-1.0, 0]]
    return states, inputs


# -- risk checker -----------------------------------------------------------


def test_risk_checker_matches_direct_evaluation(setting):
    cfg, scenario, _, _, checker = setting
    x = np.array([2.0, 2.0, 0.0, 0.0])
    direct = worst_case_cvar_primal(scenario.risk_values(x), checker.amb, cfg.beta)
    assert checker.worst_case(x) == pytest.approx(direct, abs=1e-8)
    assert checker.worst_case(x) == checker.worst_case(x)  # memo hit, same value
    far = np.array([-1.0, -1.0, 0.0, 0.0])
    assert checker.worst_case(far) == 0.0
    assert np.array_equal(checker.position_gradient(far), np.zeros(2))
    assert checker.satisfied(far, cfg.delta)
    assert not checker.satisfied(x, cfg.delta)


def test_risk_checker_gradient_against_finite_differences():
    scenario, dist, amb = single_atom_scenario([2.0, 2.0], [0.0, 2, 0, 0])
    checker = RiskChecker(scenario, amb, 1.0)

    def wc(px, py):
        return RiskChecker(scenario, amb, 1.0).worst_case(np.array([px, py, 0.0, 0.0]))

    # inside the box, the x-face dominates: slope +1 toward the centre
    x = np.array([1.9, 2.02, 0.0, 0.0])
    grad = checker.position_gradient(x)
    h = 1e-7
    fd = np.array(
        [
            (wc(1.9 + h, 2.02) - wc(1.9 - h, 2.02)) / (2 * h),
            (wc(1.9, 2.02 + h) - wc(1.9, 2.02 - h)) / (2 * h),
        ]
    )
    assert np.allclose(grad, fd, atol=1e-6)
    assert np.allclose(grad, [1.0, 0.0], atol=1e-12)


# -- finite-horizon planner -------------------------------------------------


def test_one_step_plan_recovers_the_stored_transition(setting):
    cfg, scenario, seed_traj, safe_set, checker = setting
    sol, _ = solve_fhp(scenario, safe_set, checker, 1, scenario.x_start, cfg.delta)
    # from a standing start the only reachable stored state is the seed's
    # first, so the plan must replay the seed input: half of 8 steps
    # accelerating means u = (waypoint - start) / 16
    assert np.allclose(sol.inputs[0], [3.0 / 16.0, 0.5 / 16.0], atol=1e-8)
    assert sol.terminal_entry.iteration == 0 and sol.terminal_entry.time == 1
    expected = scenario.stage_cost(scenario.x_start, sol.inputs[0]) + sol.terminal_cost
    assert sol.objective == pytest.approx(expected, abs=1e-8)
    assert sol.terminal_cost == safe_set.min_cost_to_go(sol.terminal_entry.state)


def test_two_step_plans_match_per_candidate_inversion(setting):
    cfg, scenario, _, safe_set, checker = setting
    a, b = scenario.dynamics.a, scenario.dynamics.b
    e_mat = np.hstack([a @ b, b])  # invertible: the terminal equality pins U
    best = np.inf
    best_key = None
    for entry in safe_set.terminal_candidates():
        u_flat = np.linalg.solve(e_mat, entry.state - a @ (a @ scenario.x_start))
        inputs = u_flat.reshape(2, 2)
        states = scenario.rollout(scenario.x_start, inputs)
        boxes = all(
            scenario.input_box.contains(inputs[k], 1e-9) for k in range(2)
        ) and scenario.state_box.contains(states[1], 1e-9)
        if not boxes:
            continue
        assert float(scenario.risk_values(states[1]).max()) == 0.0
        value = (
            scenario.stage_cost(scenario.x_start, inputs[0])
            + scenario.stage_cost(states[1], inputs[1])
            + safe_set.min_cost_to_go(entry.state)
        )
        if value < best:
            best = value
            best_key = state_key(entry.state)
    sol, _ = solve_fhp(scenario, safe_set, checker, 2, scenario.x_start, cfg.delta)
    assert sol.objective == pytest.approx(best, abs=1e-8)
    assert state_key(sol.terminal_entry.state) == best_key


def test_three_step_plans_match_condensed_qp_enumeration(setting):
    cfg, scenario, _, safe_set, checker = setting
    horizon = 3
    n, m = scenario.n_states, scenario.n_inputs
    a, b = scenario.dynamics.a, scenario.dynamics.b
    a_pow = [np.linalg.matrix_power(a, k) for k in range(horizon + 1)]
    phi = np.zeros((horizon + 1, n, horizon * m))
    for k in range(1, horizon + 1):
        for j in range(k):
            phi[k, :, j * m : (j + 1) * m] = a_pow[k - 1 - j] @ b
    q_mat, r_mat, goal = scenario.cost.q, scenario.cost.r, scenario.x_goal

    h_mat = np.zeros((horizon * m, horizon * m))
    f_vec = np.zeros(horizon * m)
    const = 0.0
    for k in range(horizon):
        dx = a_pow[k] @ scenario.x_start - goal
        h_mat += 2.0 * phi[k].T @ q_mat @ phi[k]
        f_vec += 2.0 * phi[k].T @ q_mat @ dx
        const += float(dx @ q_mat @ dx)
        sel = np.zeros((m, horizon * m))
        sel[:, k * m : (k + 1) * m] = np.eye(m)
        h_mat += 2.0 * sel.T @ r_mat @ sel
    h_mat = 0.5 * (h_mat + h_mat.T)

    rows = []
    rhs = []
    for k in range(1, horizon):  # state box on intermediate states
        rows.append(phi[k])
        rhs.append(scenario.state_box.upper - a_pow[k] @ scenario.x_start)
        rows.append(-phi[k])
        rhs.append(a_pow[k] @ scenario.x_start - scenario.state_box.lower)
    rows.append(np.eye(horizon * m))
    rhs.append(np.tile(scenario.input_box.upper, horizon))
    rows.append(-np.eye(horizon * m))
    rhs.append(-np.tile(scenario.input_box.lower, horizon))
    g_mat = np.vstack(rows)
    g_rhs = np.concatenate(rhs)

    best = np.inf
    for entry in safe_set.terminal_candidates():
        a_eq = phi[horizon]
        b_eq = entry.state - a_pow[horizon] @ scenario.x_start
        try:
            value, u_flat = qp_active_set_enumeration(h_mat, f_vec, a_eq, b_eq, g_mat, g_rhs)
        except AssertionError:
            continue
        states = scenario.rollout(scenario.x_start, u_flat.reshape(horizon, m))
        assert float(max(scenario.risk_values(states[k]).max() for k in (1, 2))) == 0.0
        best = min(best, value + const + safe_set.min_cost_to_go(entry.state))

    sol, _ = solve_fhp(scenario, safe_set, checker, horizon, scenario.x_start, cfg.delta)
    assert sol.objective == pytest.approx(best, abs=1e-7)


def test_solution_is_internally_consistent(setting):
    cfg, scenario, _, safe_set, checker = setting
    sol, _ = solve_fhp(scenario, safe_set, checker, 5, scenario.x_start, cfg.delta)
    assert np.array_equal(sol.states, scenario.rollout(scenario.x_start, sol.inputs))
    stage_total = sum(
        scenario.stage_cost(sol.states[k], sol.inputs[k]) for k in range(5)
    )
    assert sol.objective == pytest.approx(stage_total + sol.terminal_cost, abs=1e-8)
    assert np.max(np.abs(sol.states[-1] - sol.terminal_entry.state)) <= 1e-7
    for k in range(5):
        assert scenario.input_box.contains(sol.inputs[k], 1e-7)
        assert scenario.state_box.contains(sol.states[k + 1], 1e-7)


def test_infeasible_when_nothing_is_reachable(setting):
    cfg, scenario, _, safe_set, checker = setting
    stranded = np.array([-1.0, -1.0, 0.0, 0.0])
    with pytest.raises(InfeasibleProblemError):
        solve_fhp(scenario, safe_set, checker, 1, stranded, cfg.delta)


# -- incumbents -------------------------------------------------------------


def test_prefix_incumbents_replay_stored_inputs(setting):
    cfg, scenario, seed_traj, safe_set, _ = setting
    incs = prefix_incumbents(scenario, safe_set, 5)
    assert len(incs) == 1
    tag, inputs, tail = incs[0]
    assert tag == "prefix"
    assert np.allclose(inputs, seed_traj.inputs[:5], atol=1e-8)
    assert state_key(tail.state) == state_key(seed_traj.states[5])


def test_shift_incumbent_tracks_the_previous_plan(setting):
    cfg, scenario, _, safe_set, checker = setting
    sol, _ = solve_fhp(scenario, safe_set, checker, 5, scenario.x_start, cfg.delta)
    x1 = scenario.step(scenario.x_start, sol.inputs[0])
    shift = shift_incumbent(scenario, safe_set, sol)
    assert shift is not None
    tag, inputs, tail = shift
    assert tag == "shift"
    assert np.array_equal(inputs[:-1], sol.inputs[1:])
    states = scenario.rollout(x1, inputs)
    assert np.max(np.abs(states[-1] - tail.state)) <= 1e-7
    for k in range(5):
        assert scenario.input_box.contains(inputs[k], 1e-7)
        assert scenario.state_box.contains(states[k + 1], 1e-7)
    shifted_cost = sum(
        scenario.stage_cost(states[k], inputs[k]) for k in range(5)
    ) + safe_set.min_cost_to_go(tail.state)
    step_paid = scenario.stage_cost(scenario.x_start, sol.inputs[0])
    assert shifted_cost <= sol.objective - step_paid + 1e-9


def test_reconstruct_input_roundtrip(setting):
    _, scenario, seed_traj, _, _ = setting
    for k in range(seed_traj.horizon):
        u, ok = reconstruct_input(scenario, seed_traj.states[k], seed_traj.states[k + 1])
        assert ok
        assert np.allclose(u, seed_traj.inputs[k], atol=1e-9)
    _, bad = reconstruct_input(scenario, seed_traj.states[0], seed_traj.states[0] + 17.0)
    assert not bad


# -- active risk constraints ------------------------------------------------


def test_planner_backs_off_to_the_risk_boundary():
    # the stage cost pulls the midpoint state into the obstacle; the plan
    # must stop on the contour where the constraint value equals delta
    scenario, dist, amb = single_atom_scenario([2.7, 2.0], [1.0, 2.0, 0.5, 0.0])
    delta = 0.1
    checker = RiskChecker(scenario, amb, 1.0)
    safe_set = SafeSet(scenario.x_goal)
    target = np.array([2.8, 2.0, 0.5, 0.0])
    pairs = [
        (np.array([0.0, 0.0, 0.0, 0.0]), 1.0),
        (target, 1.0),
        (scenario.x_goal, 0.0),
    ]
    safe_set = safe_set.append(0, pairs)

    sol, _ = solve_fhp(scenario, safe_set, checker, 3, scenario.x_start, delta)
    assert state_key(sol.terminal_entry.state) == state_key(target)
    for k in (1, 2):
        wc = worst_case_cvar_primal(scenario.risk_values(sol.states[k]), amb, 1.0)
        assert wc <= delta + 1e-6
    # the constraint is genuinely active: the cheapest reachable midpoint
    # sits at value 0.15, so a feasible plan must rest on the boundary
    assert checker.worst_case(sol.states[2]) >= delta - 1e-3
    loose, _ = solve_fhp(scenario, safe_set, checker, 3, scenario.x_start, 0.2)
    assert worst_case_cvar_primal(scenario.risk_values(loose.states[2]), amb, 1.0) > delta
    assert sol.objective > loose.objective + 1e-3


def test_planner_rejects_plans_with_pinned_risky_states():
    # the first predicted position is start + velocity, beyond control;
    # placing the obstacle there makes every candidate infeasible
    scenario, dist, amb = single_atom_scenario([2.05, 2.0], [1.5, 2.0, 0.5, 0.0])
    checker = RiskChecker(scenario, amb, 1.0)
    safe_set = SafeSet(scenario.x_goal)
    pairs = [
        (np.array([0.0, 0.0, 0.0, 0.0]), 1.0),
        (np.array([2.8, 2.0, 0.3, 0.0]), 1.0),
        (scenario.x_goal, 0.0),
    ]
    safe_set = safe_set.append(0, pairs)
    with pytest.raises(InfeasibleProblemError):
        solve_fhp(scenario, safe_set, checker, 2, scenario.x_start, 0.1)
    # loosening the risk budget past the pinned value makes it solvable
    sol, _ = solve_fhp(scenario, safe_set, checker, 2, scenario.x_start, 0.2)
    assert sol.objective < np.inf


# -- closed loop ------------------------------------------------------------


def test_closed_loop_with_active_risk_reaches_the_goal():
    scenario, dist, amb = single_atom_scenario([2.5, 2.0], [0.0, 2.0, 0.0, 0.0])
    delta = 0.1
    safe_set = SafeSet(scenario.x_goal)
    states, inputs = corridor_chain()
    safe_set = append_chain(safe_set, scenario, states, inputs)

    traj = dr_mpc(
        scenario, safe_set, amb, dist, 1.0, delta, 3, np.random.default_rng(0),
        eps_term=1e-2, t_max=100,
    )
    assert np.array_equal(traj.states[-1], scenario.x_goal)
    assert traj.prefix_feasible
    assert traj.shift_feasible.size == traj.solve_steps - 1
    assert bool(np.all(traj.shift_feasible))
    assert traj.start_risk_ok
    assert lyapunov_violation(traj) <= 1e-9
    checker = RiskChecker(scenario, amb, 1.0)
    for t in range(traj.horizon + 1):
        assert checker.satisfied(traj.states[t], delta)
    # certified start cost dominates the realized rollout cost
    assert traj.realized_cost <= traj.j_values[0] + 1e-3
    assert traj.stage_costs.size == traj.horizon
    assert traj.sample_indices.size == traj.horizon
    assert np.all(traj.sample_indices == 0)


def test_closed_loop_on_the_nominal_setting(setting):
    cfg, scenario, seed_traj, safe_set, checker = setting
    true_dist = build_true_distribution(cfg)
    traj = dr_mpc(
        scenario, safe_set, checker.amb, true_dist, cfg.beta, cfg.delta,
        cfg.horizon, np.random.default_rng(123),
        eps_term=cfg.eps_term, t_max=cfg.t_max, tol_feas=cfg.tol_feas,
    )
    assert np.array_equal(traj.states[-1], scenario.x_goal)
    assert traj.horizon == traj.solve_steps + traj.steering_steps
    assert lyapunov_violation(traj) <= 1e-9
    assert traj.j_values.size == traj.solve_steps
    assert traj.realized_cost <= traj.j_values[0] + 1e-3
    assert traj.realized_cost < seed_traj.realized_cost  # it learned something
    for t in range(traj.horizon):
        assert scenario.input_box.contains(traj.inputs[t], 1e-7)
        assert scenario.state_box.contains(traj.states[t + 1], 1e-7)
