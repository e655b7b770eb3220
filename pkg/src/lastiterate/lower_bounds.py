"""Finite-horizon versions of the infinite-horizon lower-bound constructions.

* the exact second-moment recursion for SGD on ``x^2/2`` with Rademacher noise,
* Monte-Carlo drift of SGD on ``|x| + x^2/2`` with noise ``3 eps``,
* dyadic index blocks ``I_k = {2^k, ..., 2^{k+1} - 1}`` split into runs of
  length ``tau_k = 2^floor(log2(k/2))`` and the "some run is all +1" event,
* per-level diagnostics ``eta_k``, ``lambda_k`` that sort a schedule into the
  three failure modes (super-harmonic, bad in expectation, bad almost surely).
"""

from __future__ import annotations

import math
from itertools import accumulate
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from .exceptions import InsufficientHorizonError, NonPositiveParameterError, RangeError
from .problems import abs_quadratic_problem
from .sgd import BLOCK_SIZE, _draws_for, simulate


# ---------------------------------------------------------------- second-moment recursion

@dataclass(frozen=True)
class SquareRecursion:
    expected_sq: np.ndarray      # E z_t^2 for t = 1..T
    T0: int

    @property
    def lower_bound(self) -> np.ndarray:
        """``1/(t - T0 + 1)`` for ``t >= T0``; 1 before (the iterate is pinned)."""
        t = np.arange(1, len(self.expected_sq) + 1)
        return np.where(t >= self.T0, 1.0 / np.maximum(t - self.T0 + 1, 1), 1.0)


def expected_square_recursion(gamma, T: int) -> SquareRecursion:
    """``E z_{t+1}^2 = (1 - gamma_t)^2 E z_t^2 + gamma_t^2`` from ``t = T0``.

    ``T0`` is the first ``t`` with ``gamma_s < 1`` for all ``t <= s <= T-1``;
    before it ``|z_t| = 1`` almost surely.  Needs ``gamma_1..gamma_{T-1}``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    g = np.asarray(gamma, dtype=float)[:T - 1]
    if len(g) < T - 1:
        raise InsufficientHorizonError(f"need {T - 1} step sizes, got {len(g)}")
    if np.any(g <= 0):
        raise NonPositiveParameterError("step sizes must be > 0")
    big = np.flatnonzero(g >= 1)
    T0 = int(big[-1]) + 2 if len(big) else 1
    out = np.ones(T)
    tail = g[T0 - 1:]
    if len(tail):
        steps = zip(((1 - tail) ** 2).tolist(), (tail * tail).tolist())
        out[T0:] = list(accumulate(steps, lambda v, ab: ab[0] * v + ab[1], initial=1.0))[1:]
    return SquareRecursion(out, T0)


# ---------------------------------------------------------------- drift simulation

@dataclass(frozen=True)
class DriftResult:
    mean_abs: np.ndarray         # E|x_t|, t = 1..T
    stderr: np.ndarray
    gamma: np.ndarray            # gamma_1..gamma_{T-1}
    n_seeds: int

    @property
    def half_min(self) -> np.ndarray:
        """``min(1, gamma_{t-1}) / 2`` aligned with ``t = 2..T`` (NaN at t = 1)."""
        return np.concatenate([[np.nan], 0.5 * np.minimum(1.0, self.gamma)])

    def violations(self, n_se: float = 3.0) -> np.ndarray:
        """Times ``t >= 2`` where ``E|x_t| < min(1, gamma_{t-1})/2 - n_se * se``."""
        lhs = self.mean_abs[1:] + n_se * self.stderr[1:]
        return np.flatnonzero(lhs < self.half_min[1:]) + 2


def simulate_drift(gamma, T: int, n_seeds: int, seed0: int = 0) -> DriftResult:
    """Mean ``|x_t|`` of SGD on ``|x| + x^2/2`` from ``x_1 = 1``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    g = np.asarray(gamma, dtype=float)
    if len(g) < T - 1:
        raise InsufficientHorizonError(f"need {T - 1} step sizes, got {len(g)}")
    alpha = np.concatenate([g[:T - 1], [0.0]])
    problem = abs_quadratic_problem()
    total = np.zeros(T)
    total_sq = np.zeros(T)
    for lo in range(seed0, seed0 + n_seeds, BLOCK_SIZE):
        seeds = range(lo, min(lo + BLOCK_SIZE, seed0 + n_seeds))
        X1 = np.ones((len(seeds), 1))
        out = simulate(problem, alpha, X1, _draws_for(problem, seeds, T), record_iterates=True)
        ax = np.abs(out.iterates[:, :, 0])
        total += ax.sum(axis=0)
        total_sq += (ax * ax).sum(axis=0)
    mean = total / n_seeds
    if n_seeds > 1:
        var = np.maximum(total_sq - n_seeds * mean * mean, 0.0) / (n_seeds - 1)
        se = np.sqrt(var / n_seeds)
    else:
        se = np.zeros(T)
    return DriftResult(mean, se, g[:T - 1].copy(), n_seeds)


# ---------------------------------------------------------------- dyadic intervals and events

def run_length(k: int) -> int:
    """``tau_k = 2^floor(log2(k/2))``, defined for ``k >= 2``."""
    if k < 2:
        raise RangeError(f"tau_k is undefined below k = 2 (got k={k})")
    return 1 << (k.bit_length() - 2)


@dataclass(frozen=True)
class DyadicLevel:
    k: int
    tau: int

    @property
    def start(self) -> int:
        return 1 << self.k

    @property
    def stop(self) -> int:
        return (1 << (self.k + 1)) - 1

    @property
    def size(self) -> int:
        return 1 << self.k

    @property
    def n_runs(self) -> int:
        return self.size // self.tau

    def indices(self) -> range:
        return range(self.start, self.stop + 1)

    def run(self, i: int) -> range:
        """``J_k(i)`` for ``1 <= i <= n_runs``."""
        if not 1 <= i <= self.n_runs:
            raise RangeError(f"run index {i} outside 1..{self.n_runs}")
        a = self.start + (i - 1) * self.tau
        return range(a, a + self.tau)


@dataclass(frozen=True)
class IntervalPartition:
    K: int
    levels: dict = field(default_factory=dict)

    def __getitem__(self, k: int) -> DyadicLevel:
        return self.levels[k]


def interval_partition(K: int) -> IntervalPartition:
    """Levels ``k = 2..K`` (where ``tau_k`` is defined)."""
    if K < 4:
        raise RangeError(f"K must be >= 4, got {K}")
    return IntervalPartition(K, {k: DyadicLevel(k, run_length(k)) for k in range(2, K + 1)})


def event_oracle(k: int) -> float:
    """Exact ``P(A_k^c) = (1 - 2^-tau_k)^(2^k / tau_k)`` (disjoint runs are independent)."""
    lvl = DyadicLevel(k, run_length(k))
    return math.exp(lvl.n_runs * math.log1p(-2.0 ** -lvl.tau))


@dataclass(frozen=True)
class EventEstimate:
    k: int
    n_trials: int
    failures: int                # trials where no run is all +1
    ci_lo: float
    ci_hi: float
    oracle: float

    @property
    def p_hat(self) -> float:
        return self.failures / self.n_trials

    @property
    def oracle_se(self) -> float:
        return math.sqrt(self.oracle * (1 - self.oracle) / self.n_trials)

    def agrees(self, n_se: float = 3.0) -> bool:
        return abs(self.p_hat - self.oracle) <= n_se * self.oracle_se


def estimate_event_Ak(k: int, n_trials: int, seed: int = 0, confidence: float = 0.95,
                      chunk_bits: int = 1 << 22) -> EventEstimate:
    """Monte-Carlo ``P(A_k^c)`` with a Clopper-Pearson interval."""
    lvl = DyadicLevel(k, run_length(k))
    rng = np.random.default_rng(seed)
    per_chunk = max(1, chunk_bits // lvl.size)
    failures = 0
    done = 0
    while done < n_trials:
        m = min(per_chunk, n_trials - done)
        # one random bit per sign; 1 means +1
        n_bits = m * lvl.size
        raw = np.frombuffer(rng.bytes(-(-n_bits // 8)), dtype=np.uint8)
        plus = np.unpackbits(raw)[:n_bits].reshape(m, lvl.n_runs, lvl.tau)
        hit = plus.all(axis=2).any(axis=1)
        failures += int(m - hit.sum())
        done += m
    ci = binomtest(failures, n_trials).proportion_ci(confidence, method="exact")
    return EventEstimate(k, n_trials, failures, float(ci.low), float(ci.high), event_oracle(k))


def event_decay_constant(estimates) -> dict:
    """``P(A_k^c) 2^(k/2) / k`` per level and its maximum (the fitted constant)."""
    ratios = {e.k: e.p_hat * 2 ** (e.k / 2) / e.k for e in estimates}
    return {"ratios": ratios, "C_fit": max(ratios.values())}


# ---------------------------------------------------------------- trichotomy diagnostics

def _log_harmonic(t):
    return -np.log(t)


def _log_inv_sqrt(t):
    return -0.5 * np.log(t)


def _log_geometric(t):
    return -t * math.log(2.0)


def _log_t_log_t(t):
    return -np.log(t) - np.log(np.log(t))


# log gamma_t, so that 2^-t stays representable at large t
NAMED_LOG_SCHEDULES: dict[str, Callable] = {
    "harmonic": _log_harmonic,
    "inv_sqrt": _log_inv_sqrt,
    "geometric": _log_geometric,
    "t_log_t": _log_t_log_t,
}


@dataclass(frozen=True)
class ScheduleDiagnostics:
    levels: np.ndarray
    log_eta: np.ndarray
    log_lam: np.ndarray
    log_peak: np.ndarray         # log max_{t in I_k} t gamma_t
    flags: dict                  # flag name -> bool
    witnesses: dict              # flag name -> witnessing levels

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)

    @property
    def lam(self) -> np.ndarray:
        return np.exp(self.log_lam)

    @property
    def classification(self) -> tuple:
        return tuple(name for name, on in self.flags.items() if on)


def _grows(values, window: int, min_log_increase: float) -> bool:
    tail = np.asarray(values[-(window + 1):], dtype=float)
    steps = np.diff(tail)
    return bool(np.all(steps > -1e-12) and tail[-1] - tail[0] >= min_log_increase)


def _log_gamma_on(gamma, idx, log):
    if callable(gamma):
        vals = np.asarray(gamma(idx.astype(float)), dtype=float)
        return vals if log else np.log(vals)
    arr = np.asarray(gamma, dtype=float)
    if len(arr) < idx[-1]:
        raise InsufficientHorizonError(
            f"schedule has {len(arr)} entries, levels up to K need {idx[-1]}")
    vals = arr[idx - 1]
    return vals if log else np.log(vals)


def schedule_trichotomy(gamma, K: int, *, c0: float = 10.0, d0: float = 0.1,
                        window: int = 5, growth: float = 0.1,
                        log: bool = False) -> ScheduleDiagnostics:
    """Diagnose an infinite-horizon schedule on levels ``k = 1..K``.

    ``gamma`` is an array (``gamma[t-1]``), a callable of ``t``, or a name in
    :data:`NAMED_LOG_SCHEDULES`; pass ``log=True`` if the callable returns
    ``log gamma_t``.  A sequence "grows" when it is nondecreasing over the
    last ``window`` levels and rises by at least a factor ``1 + growth``.

    Flags
    -----
    super_harmonic
        ``max_{t in I_k} t gamma_t`` grows.
    expectation_bad
        ``min_{j >= k} max(eta_j, 1/lambda_j)`` grows.
    almost_surely_bad
        some level among the last ``window`` has ``eta_k <= c0`` and
        ``lambda_k >= d0``.
    """
    if isinstance(gamma, str):
        if gamma not in NAMED_LOG_SCHEDULES:
            raise KeyError(f"unknown schedule {gamma!r}; known: {sorted(NAMED_LOG_SCHEDULES)}")
        gamma, log = NAMED_LOG_SCHEDULES[gamma], True
    if K < window + 1:
        raise InsufficientHorizonError(f"need K >= {window + 1} levels, got {K}")
    levels = np.arange(1, K + 1)
    log_eta, log_lam, log_peak = [], [], []
    for k in levels:
        idx = np.arange(1 << k, 1 << (k + 1), dtype=np.int64)
        lg = _log_gamma_on(gamma, idx, log)
        if not np.all(np.isfinite(lg)):
            raise NonPositiveParameterError(f"gamma must be positive and finite on I_{k}")
        l1 = logsumexp(lg)
        l2 = logsumexp(2 * lg)
        log_lam.append(l1)
        log_eta.append(k * math.log(2.0) + l2 - 2 * l1)
        log_peak.append(float(np.max(np.log(idx) + lg)))
    log_eta, log_lam, log_peak = map(np.array, (log_eta, log_lam, log_peak))

    min_inc = math.log1p(growth)
    # min over later levels of max(eta_k, 1/lambda_k)
    bad_exp = np.minimum.accumulate(np.maximum(log_eta, -log_lam)[::-1])[::-1]
    as_mask = (log_eta <= math.log(c0)) & (log_lam >= math.log(d0))
    tail = levels[-window:]
    flags = {
        "super_harmonic": _grows(log_peak, window, min_inc),
        "expectation_bad": _grows(bad_exp, window, min_inc),
        "almost_surely_bad": bool(as_mask[-window:].any()),
    }
    witnesses = {
        "super_harmonic": tail.tolist() if flags["super_harmonic"] else [],
        "expectation_bad": tail.tolist() if flags["expectation_bad"] else [],
        "almost_surely_bad": levels[as_mask].tolist(),
    }
    return ScheduleDiagnostics(levels, log_eta, log_lam, log_peak, flags, witnesses)
