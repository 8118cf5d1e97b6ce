"""Report emission and verification.

Reports are plain files: a trajectory table CSV, an obstacle-realization
CSV, and a summary JSON. Every float is written with 17 significant digits,
so emitted values round-trip to the exact in-memory doubles and identical
runs produce identical bytes. Timing goes to its own file because wall-clock
numbers are the one legitimately non-reproducible output.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, build_scenario, config_from_dict
from .iterate import ExperimentResult
from .mpc import ClosedLoopTrajectory

TRAJECTORY_HEADER = "iter,t,z,y,vz,vy,az,ay,stage_cost,collision"
OBSTACLE_HEADER = "iter,t,w_index,w,ox,oy"


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _json_value(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{pad_in}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}'
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad_in}{_json_value(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def json_dumps(obj) -> str:
    """JSON text with 17-significant-digit floats and stable layout."""
    return _json_value(obj, 2, 0) + "\n"


def _trajectory_rows(iteration: int, traj: ClosedLoopTrajectory) -> list[str]:
    rows = []
    horizon = traj.horizon
    for t in range(horizon + 1):
        state = traj.states[t]
        if t < horizon:
            inp = traj.inputs[t]
            cost = traj.stage_costs[t]
            flag = int(bool(traj.collisions[t]))
        else:
            inp = np.zeros(traj.inputs.shape[1])
            cost = 0.0
            flag = 0
        cells = [str(iteration), str(t)]
        cells += [format_float(c) for c in state]
        cells += [format_float(c) for c in inp]
        cells.append(format_float(cost))
        cells.append(str(flag))
        rows.append(",".join(cells))
    return rows


def write_trajectories_csv(path: Path, result: ExperimentResult) -> None:
    lines = [TRAJECTORY_HEADER]
    lines += _trajectory_rows(0, result.seed_trajectory)
    for rec in result.records:
        lines += _trajectory_rows(rec.index, rec.trajectory)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_obstacles_csv(path: Path, result: ExperimentResult) -> None:
    scenario = build_scenario(result.config)
    lines = [OBSTACLE_HEADER]
    for rec in result.records:
        traj = rec.trajectory
        for t in range(traj.horizon):
            w_idx = int(traj.sample_indices[t])
            if w_idx < 0:
                continue
            w = scenario.support.points[w_idx]
            lines.append(
                ",".join(
                    [
                        str(rec.index),
                        str(t),
                        str(w_idx),
                        format_float(w),
                        format_float(scenario.centers_x[w_idx]),
                        format_float(scenario.centers_y[w_idx]),
                    ]
                )
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_summary(result: ExperimentResult) -> dict:
    iterations = []
    for rec in result.records:
        traj = rec.trajectory
        iterations.append(
            {
                "index": rec.index,
                "theta": rec.theta,
                "steps": traj.horizon,
                "solve_steps": traj.solve_steps,
                "steering_steps": traj.steering_steps,
                "j_start": float(traj.j_values[0]),
                "j_values": [float(v) for v in traj.j_values],
                "realized_cost": traj.realized_cost,
                "stage_costs": [float(c) for c in traj.stage_costs],
                "collision": bool(traj.collisions.any()),
                "collision_count": int(traj.collisions.sum()),
                "new_sample_indices": [int(i) for i in rec.new_sample_indices],
                "total_samples": rec.total_samples,
                "empirical_probs": [float(p) for p in rec.empirical_probs],
                "removed_iters": list(rec.removed_iters),
                "live_iters": list(rec.live_iters),
                "prefix_feasible": bool(traj.prefix_feasible),
                "shift_feasible_all": bool(traj.shift_feasible.all()) if traj.shift_feasible.size else True,
                "start_risk_ok": bool(traj.start_risk_ok),
                "true_dist_safe": bool(rec.true_dist_safe),
            }
        )
    safe_flags = [it["true_dist_safe"] for it in iterations]
    summary = {
        "config": asdict(result.config),
        "initial_sample_indices": [int(i) for i in result.initial_sample_indices],
        "iterations": iterations,
        "safety_frequency": (sum(safe_flags) / len(safe_flags)) if safe_flags else 1.0,
        "final_live_iters": list(result.safe_set.live_iters),
        "safe_set_lines": result.safe_set.to_lines(),
    }
    return summary


def write_summary(path: Path, summary: dict) -> None:
    path.write_text(json_dumps(summary), encoding="utf-8")


def write_report(result: ExperimentResult, out_dir: str | Path) -> dict:
    """Write all report files; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories_csv(out / "trajectories.csv", result)
    write_obstacles_csv(out / "obstacles.csv", result)
    summary = build_summary(result)
    write_summary(out / "summary.json", summary)
    return summary


def write_timing(out_dir: str | Path, timing: dict) -> None:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "timing.json").write_text(json_dumps(timing), encoding="utf-8")


def read_trajectories(path: Path) -> dict[int, dict[str, np.ndarray]]:
    """Parse a trajectory CSV back into per-iteration arrays (exact floats)."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != TRAJECTORY_HEADER:
        raise ValueError("missing or unexpected trajectory header")
    buckets: dict[int, list[list[str]]] = {}
    for line in text[1:]:
        cells = line.split(",")
        buckets.setdefault(int(cells[0]), []).append(cells)
    out = {}
    for iteration, rows in buckets.items():
        rows.sort(key=lambda cells: int(cells[1]))
        horizon = len(rows) - 1
        states = np.array([[float(c) for c in cells[2:6]] for cells in rows])
        inputs = np.array([[float(c) for c in cells[6:8]] for cells in rows[:horizon]]).reshape(horizon, 2)
        costs = np.array([float(cells[8]) for cells in rows[:horizon]])
        flags = np.array([int(cells[9]) for cells in rows[:horizon]], dtype=bool)
        out[iteration] = {
            "states": states,
            "inputs": inputs,
            "stage_costs": costs,
            "collisions": flags,
        }
    return out


def read_summary(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_report(out_dir: str | Path, tol_dyn: float = 1e-8, tol_cost: float = 1e-9) -> list[str]:
    """Re-check a finished report from its files alone; returns problems."""
    out = Path(out_dir)
    problems: list[str] = []
    summary = read_summary(out / "summary.json")
    cfg = config_from_dict(summary["config"])
    scenario = build_scenario(cfg)
    trajectories = read_trajectories(out / "trajectories.csv")

    obstacle_rows: dict[tuple[int, int], int] = {}
    obs_lines = (out / "obstacles.csv").read_text(encoding="utf-8").strip().splitlines()
    if obs_lines[0] != OBSTACLE_HEADER:
        problems.append("obstacles.csv: unexpected header")
    for line in obs_lines[1:]:
        cells = line.split(",")
        obstacle_rows[(int(cells[0]), int(cells[1]))] = int(cells[2])

    recorded = {it["index"]: it for it in summary["iterations"]}
    for iteration, data in sorted(trajectories.items()):
        states, inputs = data["states"], data["inputs"]
        costs, flags = data["stage_costs"], data["collisions"]
        horizon = inputs.shape[0]
        for t in range(horizon):
            predicted = scenario.step(states[t], inputs[t])
            if float(np.max(np.abs(states[t + 1] - predicted))) > tol_dyn:
                problems.append(f"iter {iteration} t {t}: dynamics residual above {tol_dyn}")
            expected = scenario.stage_cost(states[t], inputs[t])
            if abs(expected - costs[t]) > tol_cost:
                problems.append(f"iter {iteration} t {t}: stage cost mismatch")
            if costs[t] < 0:
                problems.append(f"iter {iteration} t {t}: negative stage cost")
            w_idx = obstacle_rows.get((iteration, t))
            if w_idx is not None and scenario.collision(states[t], w_idx) != bool(flags[t]):
                problems.append(f"iter {iteration} t {t}: collision flag mismatch")
        if float(np.max(np.abs(states[horizon] - scenario.x_goal))) > 1e-9:
            problems.append(f"iter {iteration}: trajectory does not end at the goal")
        info = recorded.get(iteration)
        if iteration == 0:
            continue
        if info is None:
            problems.append(f"iter {iteration}: missing from summary")
            continue
        if info["steps"] != horizon:
            problems.append(f"iter {iteration}: summary steps != CSV rows - 1")
        if abs(info["realized_cost"] - float(costs.sum())) > tol_cost:
            problems.append(f"iter {iteration}: realized cost mismatch")
        if info["collision"] != bool(flags.any()):
            problems.append(f"iter {iteration}: collision flag mismatch in summary")
        j_values = info["j_values"]
        for t in range(info["solve_steps"] - 1):
            if j_values[t + 1] > j_values[t] - costs[t] + 1e-4:
                problems.append(f"iter {iteration} t {t}: cost-to-go increase beyond tolerance")
        if info["j_start"] < 0 or not np.isfinite(info["j_start"]):
            problems.append(f"iter {iteration}: certified cost not finite and nonnegative")

    indices = [it["index"] for it in summary["iterations"]]
    live: set[int] = {0}
    total = len(summary["initial_sample_indices"])
    for it in summary["iterations"]:
        live.add(it["index"])
        live -= set(it["removed_iters"])
        if sorted(live) != list(it["live_iters"]):
            problems.append(f"iter {it['index']}: live set bookkeeping mismatch")
        live = set(it["live_iters"])
        if not cfg.freeze_dataset:
            total += it["steps"]
        if it["total_samples"] != total:
            problems.append(f"iter {it['index']}: sample count bookkeeping mismatch")
    if indices != sorted(indices):
        problems.append("summary iterations out of order")
    return problems
