"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``sweep`` (ambiguity-radius grid),
``replicate`` (Monte-Carlo safety study), ``check`` (re-verify a finished
report from its files). Reports are deterministic given config and seed;
wall-clock timings go to a separate file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, with_overrides
from .iterate import run_experiment
from .report import json_dumps, read_summary, verify_report, write_report, write_timing

log = logging.getLogger("drilmpc")

DEFAULT_SWEEP_THETAS = (5e-6, 5e-4, 5e-2, 0.5)


def _setup_logging() -> None:
    level = os.environ.get("DRILMPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "theta", None) is not None:
        overrides["theta"] = args.theta
    if getattr(args, "iterations", None) is not None:
        overrides["iterations"] = args.iterations
    if overrides:
        cfg = with_overrides(cfg, **overrides)
    cfg.validate()
    return cfg


def _run_one(job: tuple[ExperimentConfig, str, bool]) -> dict:
    cfg, out_dir, checkpoints = job
    started = time.perf_counter()
    result = run_experiment(cfg, checkpoint_dir=Path(out_dir) / "checkpoints" if checkpoints else None)
    summary = write_report(result, out_dir)
    write_timing(out_dir, {"total_seconds": time.perf_counter() - started})
    return {
        "out": str(out_dir),
        "seed": cfg.seed,
        "theta": cfg.theta if isinstance(cfg.theta, (int, float)) else list(cfg.theta),
        "safety_frequency": summary["safety_frequency"],
        "collisions": sum(1 for it in summary["iterations"] if it["collision"]),
        "final_cost": summary["iterations"][-1]["realized_cost"] if summary["iterations"] else None,
    }


def _run_jobs(jobs: list[tuple[ExperimentConfig, str, bool]], workers: int) -> list[dict]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    outcome = _run_one((cfg, str(args.out), args.checkpoints))
    log.info("run finished: %s", outcome)
    print(json_dumps(outcome), end="")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _base_config(args)
    thetas = [float(t) for t in args.thetas.split(",")] if args.thetas else list(DEFAULT_SWEEP_THETAS)
    jobs = []
    for theta in thetas:
        sub = Path(args.out) / f"theta_{theta:g}"
        jobs.append((with_overrides(cfg, theta=theta), str(sub), False))
    outcomes = _run_jobs(jobs, args.jobs)
    table = {"thetas": thetas, "runs": outcomes}
    (Path(args.out) / "sweep.json").parent.mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "sweep.json").write_text(json_dumps(table), encoding="utf-8")
    print(json_dumps(table), end="")
    return 0


def _cmd_replicate(args) -> int:
    cfg = _base_config(args)
    streams = np.random.SeedSequence(cfg.seed).generate_state(args.n)
    jobs = []
    for k in range(args.n):
        sub = Path(args.out) / f"rep_{k:04d}"
        jobs.append((with_overrides(cfg, seed=int(streams[k])), str(sub), False))
    outcomes = _run_jobs(jobs, args.jobs)

    iteration_flags: list[list[bool]] = []
    for k in range(args.n):
        summary = read_summary(Path(jobs[k][1]) / "summary.json")
        iteration_flags.append([bool(it["true_dist_safe"]) for it in summary["iterations"]])
    n_iters = max((len(flags) for flags in iteration_flags), default=0)
    per_iteration = []
    for j in range(n_iters):
        hits = [flags[j] for flags in iteration_flags if len(flags) > j]
        per_iteration.append(sum(hits) / len(hits) if hits else 1.0)
    overall = (
        sum(sum(flags) for flags in iteration_flags)
        / max(1, sum(len(flags) for flags in iteration_flags))
    )
    table = {
        "replications": args.n,
        "base_seed": cfg.seed,
        "per_iteration_frequency": per_iteration,
        "overall_frequency": overall,
        "runs": outcomes,
    }
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "replicate.json").write_text(json_dumps(table), encoding="utf-8")
    print(json_dumps(table), end="")
    return 0


def _cmd_check(args) -> int:
    problems = verify_report(args.out)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return 1
    print("report verified: no problems found")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drilmpc", description="Risk-constrained iterative MPC simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_jobs: bool = True) -> None:
        p.add_argument("--config", type=str, default=None, help="TOML or JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
        p.add_argument("--out", type=str, default="out", help="output directory")
        p.add_argument("--theta", type=float, default=None, help="override the ambiguity radius")
        p.add_argument("--iterations", type=int, default=None, help="override the iteration count")
        if with_jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run, with_jobs=False)
    p_run.add_argument("--checkpoints", action="store_true", help="write per-iteration checkpoints")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the ambiguity-radius grid")
    common(p_sweep)
    p_sweep.add_argument("--thetas", type=str, default=None, help="comma-separated radii (default reference grid)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_rep = sub.add_parser("replicate", help="Monte-Carlo safety study")
    common(p_rep)
    p_rep.add_argument("--n", type=int, default=200, help="number of replications")
    p_rep.set_defaults(func=_cmd_replicate)

    p_check = sub.add_parser("check", help="verify a finished report directory")
    p_check.add_argument("--out", type=str, required=True, help="report directory to verify")
    p_check.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean diagnostic, nonzero exit
        log.debug("fatal error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
