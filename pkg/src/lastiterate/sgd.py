"""Projected SGD with trace recording and seeded Monte-Carlo ensembles.

The update is ``x_{t+1} = P_W(x_t - alpha_t g_t(x_t))`` for ``t = 1..T-1``,
so a horizon-``T`` run makes exactly ``T - 1`` oracle calls and ``alpha_T``
is never applied.

Seed ``s`` always maps to ``numpy.random.default_rng(s)``; numpy's
``SeedSequence`` hashes the integer into the generator state.  The noise for
the whole run is drawn up front from that stream, so seed ``s`` sees the
same oracle draws whether it runs alone, inside an ensemble, or under a
different schedule (paired comparisons).
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionMismatchError, IteratesNotRecordedError, SeedRunError
from .problems import ProblemInstance
from .schedules import StepSchedule

# Seeds are simulated in fixed blocks so that results never depend on the
# number of worker threads.
BLOCK_SIZE = 128

RECORD_MODES = ("objectives_only", "full_iterates")
AVERAGING_MODES = ("last", "suffix_quarter", "running")


class SimOutput(NamedTuple):
    objectives: np.ndarray            # (m, T), F(x_t)
    iterates: np.ndarray | None       # (m, T, d)
    averaged: np.ndarray | None       # (m, T), F of the window average
    final: np.ndarray                 # (m, d), x_T


def simulate(problem: ProblemInstance, alpha, X1, draws, *, record_iterates=False,
             average_from: int | None = None) -> SimOutput:
    """Run a batch of ``m`` independent trajectories in lockstep.

    ``X1`` is ``(m, d)``; ``draws`` is ``(m, T-1)`` or ``None`` for a
    deterministic oracle.  With ``average_from = s0`` the ``averaged`` output
    holds ``F(mean(x_{s0+1..t}))`` for ``t > s0`` and ``F(x_t)`` before.
    """
    alpha = np.asarray(alpha, dtype=float)
    T = alpha.shape[0]
    X = problem.project(np.array(X1, dtype=float, ndmin=2))
    m = X.shape[0]
    objectives = np.empty((m, T))
    objectives[:, 0] = problem.objective_fn(X)
    iterates = None
    if record_iterates:
        iterates = np.empty((m, T, problem.dim))
        iterates[:, 0] = X
    averaged = None
    if average_from is not None:
        averaged = np.empty((m, T))
        running_sum = np.zeros_like(X)
        if average_from == 0:
            running_sum += X
        averaged[:, 0] = objectives[:, 0]

    oracle, subgrad, objective = problem.oracle_fn, problem.subgradient_fn, problem.objective_fn
    for j in range(T - 1):
        g = subgrad(X) if draws is None else oracle(X, draws[:, j])
        X = problem.project(X - alpha[j] * g)
        objectives[:, j + 1] = objective(X)
        if record_iterates:
            iterates[:, j + 1] = X
        if averaged is not None:
            t = j + 2
            if t > average_from:
                running_sum += X
                averaged[:, j + 1] = objective(running_sum / (t - average_from))
            else:
                averaged[:, j + 1] = objectives[:, j + 1]
    return SimOutput(objectives, iterates, averaged, X)


def _draws_for(problem: ProblemInstance, seeds, T: int):
    if not problem.is_stochastic:
        return None
    return np.stack([problem.sample_draws(np.random.default_rng(int(s)), T - 1)
                     for s in seeds]) if T > 1 else np.zeros((len(seeds), 0), dtype=np.int8)


def _averaging_start(mode: str, T: int):
    if mode == "last":
        return None
    if mode == "running":
        return 0
    if mode == "suffix_quarter":
        return -(-3 * T // 4)
    raise ValueError(f"unknown averaging mode {mode!r}; expected one of {AVERAGING_MODES}")


# ---------------------------------------------------------------- single runs

@dataclass(frozen=True)
class RunConfig:
    T: int
    schedule: StepSchedule
    x1: np.ndarray | None = None
    seed: int = 0
    record: str = "objectives_only"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if len(self.schedule) != self.T:
            raise ValueError(f"schedule length {len(self.schedule)} != T={self.T}")
        if self.record not in RECORD_MODES:
            raise ValueError(f"record must be one of {RECORD_MODES}")

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(self.T, self.schedule, self.x1, seed, self.record)


def config_hash(problem: ProblemInstance, config: RunConfig) -> str:
    payload = {
        "problem": problem.describe(),
        "family": config.schedule.family,
        "params": config.schedule.params,
        "alpha": hashlib.sha256(config.schedule.alpha.tobytes()).hexdigest(),
        "T": config.T,
        "seed": config.seed,
        "x1": None if config.x1 is None else np.asarray(config.x1, float).tolist(),
    }
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Trace:
    config_hash: str
    seed: int
    objective_values: np.ndarray
    iterates: np.ndarray | None
    problem: ProblemInstance

    @property
    def T(self) -> int:
        return len(self.objective_values)

    @property
    def subopt(self) -> np.ndarray:
        return self.objective_values - self.problem.f_star

    @property
    def last(self) -> float:
        return float(self.objective_values[-1])


def _start_point(problem: ProblemInstance, x1):
    if x1 is None:
        return problem.x1
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x1.shape != (problem.dim,):
        raise DimensionMismatchError(
            f"x1 has shape {x1.shape} but the problem has dimension {problem.dim}")
    return problem.project(x1)


def run_sgd(problem: ProblemInstance, config: RunConfig) -> Trace:
    x1 = _start_point(problem, config.x1)
    draws = _draws_for(problem, [config.seed], config.T)
    out = simulate(problem, config.schedule.alpha, x1[None, :], draws,
                   record_iterates=config.record == "full_iterates")
    objectives = out.objectives[0]
    objectives.setflags(write=False)
    iterates = None if out.iterates is None else out.iterates[0]
    return Trace(config_hash(problem, config), config.seed, objectives, iterates, problem)


def suffix_average(trace: Trace, fraction: float):
    """Mean of ``x_t`` over ``t in (ceil((1 - fraction) T), T]`` and F there."""
    if trace.iterates is None:
        raise IteratesNotRecordedError("suffix_average needs record='full_iterates'")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    T = trace.T
    start = math.ceil((1 - fraction) * T)
    start = min(start, T - 1)
    point = trace.iterates[start:].mean(axis=0)
    return point, trace.problem.objective(point)


def running_average(trace: Trace) -> np.ndarray:
    """``F(mean(x_1..x_t))`` for every ``t``."""
    if trace.iterates is None:
        raise IteratesNotRecordedError("running_average needs record='full_iterates'")
    counts = np.arange(1, trace.T + 1)[:, None]
    means = np.cumsum(trace.iterates, axis=0) / counts
    return trace.problem.objective(means)


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    n_seeds: int
    seed0: int
    f_star: float
    mean_objective: np.ndarray
    stderr: np.ndarray
    final_objectives: np.ndarray
    mode: str = "last"

    @property
    def mean_subopt(self) -> np.ndarray:
        return self.mean_objective - self.f_star

    @property
    def T(self) -> int:
        return len(self.mean_objective)

    @property
    def seeds(self) -> np.ndarray:
        return np.arange(self.seed0, self.seed0 + self.n_seeds)


def _block_stats(values):
    n = values.shape[0]
    mean = values.mean(axis=0)
    m2 = ((values - mean) ** 2).sum(axis=0)
    return n, mean, m2


def _combine(a, b):
    """Chan et al. pairwise update of (count, mean, M2)."""
    na, ma, qa = a
    nb, mb, qb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), qa + qb + delta * delta * (na * nb / n)


def _run_block(problem, alpha, x1, seeds, average_from):
    draws = _draws_for(problem, seeds, len(alpha))
    X1 = np.repeat(x1[None, :], len(seeds), axis=0)
    try:
        with np.errstate(over="raise", invalid="raise"):
            out = simulate(problem, alpha, X1, draws, average_from=average_from)
    except (FloatingPointError, ValueError) as exc:
        # isolate the offending seed
        for s in seeds:
            try:
                with np.errstate(over="raise", invalid="raise"):
                    simulate(problem, alpha, x1[None, :], _draws_for(problem, [s], len(alpha)),
                             average_from=average_from)
            except (FloatingPointError, ValueError) as inner:
                raise SeedRunError(int(s), inner) from inner
        raise SeedRunError(int(seeds[0]), exc) from exc
    curve = out.objectives if out.averaged is None else out.averaged
    bad = ~np.all(np.isfinite(curve), axis=1)
    if bad.any():
        s = int(seeds[int(np.argmax(bad))])
        raise SeedRunError(s, FloatingPointError("non-finite objective"))
    return curve


def objective_paths(problem: ProblemInstance, config: RunConfig, seeds, *,
                    mode: str = "last", n_jobs: int = 1) -> np.ndarray:
    """Per-seed objective curves, shape ``(len(seeds), T)``, rows in seed order."""
    return alpha_paths(problem, config.schedule.alpha, seeds, x1=config.x1,
                       mode=mode, n_jobs=n_jobs)


def alpha_paths(problem: ProblemInstance, alpha, seeds, *, x1=None, mode: str = "last",
                n_jobs: int = 1) -> np.ndarray:
    """Like :func:`objective_paths` for a raw step array (zeros allowed)."""
    alpha = np.asarray(alpha, dtype=float)
    seeds = np.asarray(list(seeds), dtype=np.int64)
    x1 = _start_point(problem, x1)
    start = _averaging_start(mode, len(alpha))
    if not problem.is_stochastic:
        curve = _run_block(problem, alpha, x1, seeds[:1], start)
        return np.repeat(curve, len(seeds), axis=0)
    blocks = [seeds[i:i + BLOCK_SIZE] for i in range(0, len(seeds), BLOCK_SIZE)]
    results = _map_blocks(lambda b: _run_block(problem, alpha, x1, b, start), blocks, n_jobs)
    return np.concatenate(results, axis=0)


def _map_blocks(fn, blocks, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, blocks))


def run_ensemble(problem: ProblemInstance, base_config: RunConfig, n_seeds: int,
                 seed0: int = 0, *, mode: str = "last", n_jobs: int = 1,
                 f_star: float | None = None) -> EnsembleSummary:
    """Independent runs for seeds ``seed0 .. seed0 + n_seeds - 1``.

    Block statistics are merged in ascending seed order, so the summary is
    bitwise identical for any ``n_jobs``.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    seeds = np.arange(seed0, seed0 + n_seeds, dtype=np.int64)
    x1 = _start_point(problem, base_config.x1)
    start = _averaging_start(mode, base_config.T)
    alpha = base_config.schedule.alpha
    f_star = problem.f_star if f_star is None else float(f_star)

    if not problem.is_stochastic:
        curve = _run_block(problem, alpha, x1, seeds[:1], start)[0]
        return EnsembleSummary(n_seeds, seed0, f_star, curve, np.zeros_like(curve),
                               np.full(n_seeds, curve[-1]), mode)

    blocks = [seeds[i:i + BLOCK_SIZE] for i in range(0, n_seeds, BLOCK_SIZE)]

    def work(block):
        curve = _run_block(problem, alpha, x1, block, start)
        return _block_stats(curve), curve[:, -1].copy()

    results = _map_blocks(work, blocks, n_jobs)
    stats = results[0][0]
    for nxt, _ in results[1:]:
        stats = _combine(stats, nxt)
    n, mean, m2 = stats
    if n > 1:
        stderr = np.sqrt(m2 / (n - 1) / n)
    else:
        stderr = np.zeros_like(mean)
    finals = np.concatenate([f for _, f in results])
    return EnsembleSummary(n_seeds, seed0, f_star, mean, stderr, finals, mode)
