"""Shared fixtures: the benchmark sweep reused across acceptance tests."""

from __future__ import annotations

import time

import pytest

from drilmpc.config import ExperimentConfig, with_overrides
from drilmpc.iterate import run_experiment

THETA_GRID = (5e-6, 5e-4, 5e-2, 0.5)
SEEDS = (1, 2, 3, 4, 5)


@pytest.fixture(scope="session")
def base_config() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture(scope="session")
def sweep_suite(base_config):
    """Full experiments for every ambiguity radius and seed, timed once."""
    results = {}
    start = time.perf_counter()
    for theta in THETA_GRID:
        for seed in SEEDS:
            cfg = with_overrides(base_config, theta=theta, seed=seed)
            results[(theta, seed)] = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    return {"results": results, "elapsed": elapsed}


@pytest.fixture(scope="session")
def benchmark_result(sweep_suite):
    """The canonical single run: default radius, first seed."""
    return sweep_suite["results"][(5e-4, 1)]
