"""Scaling benchmark: iterations to tolerance for CBRD and SIRD as N grows.

Instances have uniform affine prices over T periods and EV-style consumers
with contiguous availability windows, so that players overlap partially and
best responses interact.  One CBRD sweep and one SIRD iteration both update
every player once, so ``N * iterations`` counts per-player update operations.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from hourly_dr.game import GameInstance, PriceModel
from hourly_dr.online import synthetic_consumers
from hourly_dr.solvers import SolverConfig, solve

DEFAULT_SIZES = (5, 10, 20, 30, 40, 50)


def bench_instance(N: int, T: int = 10, rng=None, alpha: float = 1.0, beta: float = 0.05) -> GameInstance:
    rng = np.random.default_rng(rng)
    consumers = synthetic_consumers(N, T, rng)
    return GameInstance(PriceModel.affine(np.full(T, alpha), np.full(T, beta)), consumers)


@dataclass
class BenchRow:
    N: int
    seed: int
    algorithm: str
    iterations: int
    updates: int
    converged: bool
    seconds: float


def run_bench(sizes=DEFAULT_SIZES, T: int = 10, seeds=(0, 1, 2), eps_stop: float = 1e-3,
              k_max: int = 100_000) -> list:
    cfg = SolverConfig(eps_stop=eps_stop, k_max=k_max)
    rows = []
    for N in sizes:
        for seed in seeds:
            game = bench_instance(N, T, np.random.default_rng([seed, N]))
            for algorithm in ("cbrd", "sird"):
                started = time.perf_counter()
                rep = solve(game, None, cfg, algorithm)
                rows.append(BenchRow(N, seed, algorithm, rep.iterations, N * rep.iterations, rep.converged,
                                     time.perf_counter() - started))
    return rows


def median_iterations(rows, algorithm: str) -> dict:
    by_n = {}
    for r in rows:
        if r.algorithm == algorithm:
            by_n.setdefault(r.N, []).append(r.iterations)
    return {n: float(np.median(v)) for n, v in sorted(by_n.items())}


def growth_exponent(medians: dict) -> float:
    """Slope of log(iterations) against log(N) by least squares."""
    n = np.array(list(medians), dtype=float)
    it = np.array(list(medians.values()), dtype=float)
    return float(np.polyfit(np.log(n), np.log(it), 1)[0])


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "seed", "algorithm", "iterations", "updates", "converged", "seconds"])
    for r in rows:
        w.writerow([r.N, r.seed, r.algorithm, r.iterations, r.updates, int(r.converged), f"{r.seconds:.6g}"])
    return buf.getvalue()
