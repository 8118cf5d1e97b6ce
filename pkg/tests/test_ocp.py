"""Problem data: dynamics, costs, boxes, and the disturbed obstacle."""

import math

import numpy as np
import pytest

from drilmpc.config import ExperimentConfig, build_scenario, build_support
from drilmpc.ocp import BoxSet, LinearDynamics, ObstacleModel, QuadraticStageCost
from oracles import g_face_formula


@pytest.fixture(scope="module")
def scenario():
    return build_scenario(ExperimentConfig())


def test_double_integrator_step(scenario):
    x = np.array([1.0, 2.0, 0.5, -0.5])
    u = np.array([0.1, 0.2])
    nxt = scenario.step(x, u)
    assert np.allclose(nxt, [1.5, 1.5, 0.6, -0.3], atol=1e-15)


def test_rollout_chains_steps(scenario):
    rng = np.random.default_rng(41)
    x0 = np.array([1.0, 1.0, 0.0, 0.0])
    inputs = rng.uniform(-1.0, 1.0, (5, 2))
    states = scenario.rollout(x0, inputs)
    assert states.shape == (6, 4)
    x = x0
    for k in range(5):
        x = scenario.step(x, inputs[k])
        assert np.array_equal(states[k + 1], x)


def test_stage_cost_is_centred_on_the_goal(scenario):
    goal = scenario.x_goal
    assert scenario.stage_cost(goal, np.zeros(2)) == 0.0
    x = goal + np.array([1.0, -2.0, 0.5, 0.5])
    u = np.array([0.3, -0.4])
    expected = 1.0 + 4.0 + 0.01 * 0.25 + 0.01 * 0.25 + 0.01 * (0.09 + 0.16)
    assert scenario.stage_cost(x, u) == pytest.approx(expected, abs=1e-12)


def test_cost_validation():
    with pytest.raises(ValueError):
        QuadraticStageCost(np.eye(2), np.zeros((2, 2)), np.zeros(2))  # r not pd
    with pytest.raises(ValueError):
        QuadraticStageCost(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticStageCost(-np.eye(2), np.eye(2), np.zeros(2))


def test_box_membership_and_violation():
    box = BoxSet(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
    assert box.contains(np.array([0.0, 1.0]))
    assert box.contains(np.array([1.0 + 5e-9, 2.0]))
    assert not box.contains(np.array([1.1, 1.0]))
    assert box.violation(np.array([1.5, -0.25])) == pytest.approx(0.5, abs=1e-15)
    assert box.violation(np.array([0.0, 1.0])) == 0.0
    with pytest.raises(ValueError):
        BoxSet(np.array([1.0]), np.array([0.0]))


def test_obstacle_centres_shift_along_the_direction(scenario):
    w = np.array([-0.5, 0.0, 0.25])
    centers = scenario.obstacle.centers(w)
    root = 1.0 / math.sqrt(2.0)
    expected = np.array([2.0, 2.0])[None, :] + w[:, None] * np.array([root, -root])[None, :]
    assert np.allclose(centers, expected, atol=1e-15)


def test_g_matches_the_face_formula(scenario):
    rng = np.random.default_rng(42)
    obstacle = scenario.obstacle
    for _ in range(500):
        pos = rng.uniform(1.0, 3.0, 2)
        center = rng.uniform(1.5, 2.5, 2)
        lib = obstacle.g_single(pos[0], pos[1], center[0], center[1])
        assert lib == pytest.approx(g_face_formula(pos, center, obstacle.half), abs=1e-15)


def test_g_peaks_at_the_centre_and_vanishes_outside(scenario):
    obstacle = scenario.obstacle
    assert obstacle.g_single(2.0, 2.0, 2.0, 2.0) == obstacle.half
    assert obstacle.g_single(2.0 + obstacle.half, 2.0, 2.0, 2.0) == 0.0
    assert obstacle.g_single(5.0, 5.0, 2.0, 2.0) == 0.0
    assert obstacle.g_single(2.1, 2.05, 2.0, 2.0) == pytest.approx(0.1, abs=1e-15)


def test_active_face_lowest_index_wins_ties(scenario):
    obstacle = scenario.obstacle
    assert obstacle.active_face(2.0, 2.0, 2.0, 2.0) == 0  # full tie
    assert obstacle.active_face(2.1, 2.1, 2.0, 2.0) == 0  # +x ties +y
    assert obstacle.active_face(1.9, 2.0, 2.0, 2.0) == 1
    assert obstacle.active_face(2.0, 2.2, 2.0, 2.0) == 2
    assert obstacle.active_face(2.05, 1.8, 2.0, 2.0) == 3


def test_risk_values_run_over_all_atoms(scenario):
    support = build_support(ExperimentConfig())
    x = np.array([2.0, 2.0, 0.0, 0.0])
    values = scenario.risk_values(x)
    assert values.shape == (support.size,)
    centers = scenario.obstacle.centers(support.points)
    for l in range(support.size):
        expected = scenario.obstacle.g_single(2.0, 2.0, centers[l, 0], centers[l, 1])
        assert values[l] == pytest.approx(expected, abs=1e-15)
    far = np.array([-1.0, -1.0, 0.0, 0.0])
    assert np.all(scenario.risk_values(far) == 0.0)


def test_collision_checks_the_realized_atom(scenario):
    inside = np.array([2.0, 2.0, 0.0, 0.0])
    mid_atom = build_support(ExperimentConfig()).size // 2
    assert scenario.collision(inside, mid_atom)
    assert not scenario.collision(np.array([0.0, 0.0, 0.0, 0.0]), mid_atom)


def test_scenario_validation():
    cfg = ExperimentConfig()
    bad_goal = ExperimentConfig(
        x_goal=[5.0, 3.0, 1.0, 0.0]  # moving goal is not an equilibrium
    )
    with pytest.raises(ValueError):
        build_scenario(bad_goal)
    outside = ExperimentConfig(x_start=[-5.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        build_scenario(outside)
    assert build_scenario(cfg).n_states == 4
    assert build_scenario(cfg).n_inputs == 2


def test_dynamics_validation():
    with pytest.raises(ValueError):
        LinearDynamics(np.eye(3), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        ObstacleModel(np.zeros(3), np.zeros(2), 0.2)
    with pytest.raises(ValueError):
        ObstacleModel(np.zeros(2), np.zeros(2), 0.0)
