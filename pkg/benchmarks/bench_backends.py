"""Compare the numba and numpy kernel backends.

Times the three hot kernels (simplex pivoting, the CVaR scan, per-atom
obstacle values) under both implementations, checks that their outputs agree
bitwise on identical inputs, and times a short end-to-end experiment under
each backend. Run as ``python benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from drilmpc import ExperimentConfig, run_experiment
from drilmpc import kernels
from drilmpc.linprog import LpProblem, lp_solve


def _random_lps(count: int, rng: np.random.Generator) -> list[LpProblem]:
    problems = []
    for _ in range(count):
        n = int(rng.integers(4, 12))
        m = int(rng.integers(2, 8))
        a = rng.normal(size=(m, n))
        x_feas = rng.uniform(0.0, 1.0, size=n)
        b = a @ x_feas + rng.uniform(0.1, 1.0, size=m)
        c = rng.normal(size=n)
        problems.append(
            LpProblem(c=c, a_ub=a, b_ub=b, lower=np.zeros(n), upper=np.full(n, 5.0))
        )
    return problems


def _workloads(rng: np.random.Generator):
    lps = _random_lps(60, rng)
    values = rng.uniform(0.0, 1.0, size=(400, 15))
    probs = rng.dirichlet(np.ones(15), size=400)
    centers = rng.uniform(1.0, 3.0, size=(400, 2, 15))
    points = rng.uniform(0.0, 4.0, size=(400, 2))

    def run_simplex() -> float:
        total = 0.0
        for problem in lps:
            total += lp_solve(problem).value
        return total

    def run_cvar() -> float:
        total = 0.0
        for k in range(values.shape[0]):
            total += kernels.cvar_scan(values[k], probs[k], 20.0)
        return total

    def run_g() -> float:
        total = 0.0
        for k in range(values.shape[0]):
            out = kernels.g_values(
                points[k, 0], points[k, 1], centers[k, 0], centers[k, 1], 0.2
            )
            total += float(out.sum())
        return total

    return {"simplex_pivots": run_simplex, "cvar_scan": run_cvar, "g_values": run_g}


def _use_backend(name: str) -> None:
    impls = kernels.IMPLEMENTATIONS[name]
    kernels.simplex_pivots = impls["simplex_pivots"]
    kernels.cvar_scan = impls["cvar_scan"]
    kernels.g_values = impls["g_values"]


def _time(fn, repeats: int) -> tuple[float, float]:
    fn()  # warm-up (JIT compile / cache fill)
    best = np.inf
    result = 0.0
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="timing repetitions per workload")
    parser.add_argument("--iterations", type=int, default=5, help="experiment length for the end-to-end row")
    parser.add_argument("--skip-experiment", action="store_true", help="only run the kernel microbenchmarks")
    args = parser.parse_args()

    backends = list(kernels.IMPLEMENTATIONS)
    if "numba" not in backends:
        print("numba is not importable; only the numpy backend is available")

    rng = np.random.default_rng(0)
    workloads = _workloads(rng)
    default = kernels.ACTIVE_BACKEND

    print(f"{'workload':<16} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + f" {'speedup':>9}")
    for name, fn in workloads.items():
        times = {}
        results = {}
        for backend in backends:
            _use_backend(backend)
            times[backend], results[backend] = _time(fn, args.repeats)
        _use_backend(default)
        checks = {results[b] for b in backends}
        if len(checks) != 1:
            raise AssertionError(f"backends disagree on {name}: {results}")
        row = " ".join(f"{times[b]:12.6f}" for b in backends)
        speedup = times["numpy"] / times[backends[0]] if "numpy" in times else 1.0
        print(f"{name:<16} {row} {speedup:9.2f}x")

    if not args.skip_experiment:
        cfg = ExperimentConfig(iterations=args.iterations)
        costs = {}
        for backend in backends:
            _use_backend(backend)
            start = time.perf_counter()
            result = run_experiment(cfg)
            elapsed = time.perf_counter() - start
            costs[backend] = tuple(result.realized_costs)
            print(f"{'experiment':<16} {backend:>8} {elapsed:12.6f} s")
        _use_backend(default)
        if len(set(costs.values())) != 1:
            raise AssertionError(f"experiment outcomes differ across backends: {costs}")
        print("bitwise agreement across backends: OK")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
