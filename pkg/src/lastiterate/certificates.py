"""Proof-level quantities and empirical certificates for the modified schedule.

Covers the supermartingale weights ``L_t``, the transfer distribution
``kappa``, the deviation statistics ``A(l, t1)`` / ``A*(t0, t1)``, the
per-phase argmins ``tau_i`` and Monte-Carlo checks of the look-ahead,
tail and good-point-transfer inequalities.  Expectation inequalities are
checked with a slack of three standard errors and always report a margin
``rhs + slack - lhs`` (nonnegative means pass).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RangeError
from .problems import ProblemInstance
from .reporting import write_csv
from .schedules import (
    Breakpoints,
    StepSchedule,
    compute_breakpoints,
    estimate_decay_constant,
    modify_schedule,
)
from .sgd import EnsembleSummary, alpha_paths, run_ensemble, RunConfig

SLACK_SE = 3.0
REPORT_COLUMNS = ["check", "params", "lhs", "rhs", "margin", "pass"]


# ---------------------------------------------------------------- reports

@dataclass
class CheckResult:
    check: str
    params: dict
    lhs: float
    rhs: float
    slack: float = 0.0

    @property
    def margin(self) -> float:
        return self.rhs + self.slack - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.margin >= 0)


@dataclass
class CertificateReport:
    results: list = field(default_factory=list)

    def add(self, check, params, lhs, rhs, slack=0.0) -> CheckResult:
        res = CheckResult(check, dict(params), float(lhs), float(rhs), float(slack))
        self.results.append(res)
        return res

    def extend(self, other: "CertificateReport") -> None:
        self.results.extend(other.results)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self):
        return [r for r in self.results if not r.passed]

    def write_csv(self, path, config: dict | None = None) -> None:
        rows = ((r.check, json.dumps(r.params, sort_keys=True), r.lhs, r.rhs, r.margin, r.passed)
                for r in self.results)
        write_csv(path, REPORT_COLUMNS, rows, config)


# ---------------------------------------------------------------- L weights

@dataclass(frozen=True)
class MartingaleWeights:
    t0: int
    t1: int
    L: np.ndarray          # L[j] is L_{t0 + j}

    @property
    def r(self) -> int:
        return self.t1 - self.t0 + 1

    def at(self, t: int) -> float:
        if not self.t0 <= t <= self.t1:
            raise RangeError(f"t={t} outside [{self.t0}, {self.t1}]")
        return float(self.L[t - self.t0])


def compute_L(t0: int, t1: int) -> MartingaleWeights:
    """Backward recursion ``L_{t1} = 1/(e r)``, ``L_{t-1} = L_t + L_t^2``."""
    if t0 >= t1:
        raise RangeError(f"empty range: need t0 < t1, got t0={t0}, t1={t1}")
    r = t1 - t0 + 1
    L = np.empty(r)
    cur = 1.0 / (math.e * r)
    L[-1] = cur
    for j in range(r - 2, -1, -1):
        cur = cur + cur * cur
        L[j] = cur
    L.setflags(write=False)
    return MartingaleWeights(t0, t1, L)


def lambda_sequence(Gamma: float, r: int, n: int | None = None) -> np.ndarray:
    """``lambda_0 = 1/(r e Gamma)``, ``lambda_{i+1} = lambda_i + Gamma lambda_i^2``."""
    if Gamma <= 0 or r < 1:
        raise ValueError("need Gamma > 0 and r >= 1")
    n = r if n is None else n
    out = np.empty(n + 1)
    cur = 1.0 / (r * math.e * Gamma)
    out[0] = cur
    for i in range(1, n + 1):
        cur = cur + Gamma * cur * cur
        out[i] = cur
    return out


# ---------------------------------------------------------------- kappa

@dataclass(frozen=True)
class TransferDistribution:
    i: int
    start: int             # first support point (T_i + 1, or ceil(T/4) for i = 0)
    stop: int              # T_{i+2}
    phase_end: int         # T_{i+1}
    kappa: np.ndarray      # over start..stop
    q: np.ndarray          # over start..phase_end
    Gamma: np.ndarray      # Gamma(t) for t = start-1 .. phase_end
    sigma: np.ndarray      # partial sums of kappa over start..phase_end

    def support(self) -> np.ndarray:
        return np.arange(self.start, self.stop + 1)


def _phase_window(i: int, bp: Breakpoints):
    if not 0 <= i <= bp.k - 1:
        raise RangeError(f"phase index i={i} outside 0..{bp.k - 1}")
    start = bp.quarter_start if i == 0 else bp.points[i] + 1
    return start, bp.points[i + 1], bp.points[i + 2]


def compute_kappa(q, i: int, bp: Breakpoints, sched) -> TransferDistribution:
    """Forward recursion turning ``q`` on phase ``i`` into ``kappa``.

    ``q`` is indexed by ``start .. T_{i+1}``.  With ``Gamma(t)`` the tail sum
    of ``alpha_s L_s`` over ``s = t+1 .. T_{i+2}``::

        kappa(t) = Gamma(T_{i+1}) q(t) / Gamma(t) + alpha_t L_t sigma(t-1) / Gamma(t)

    and ``kappa = 0`` past ``T_{i+1}``.
    """
    start, phase_end, stop = _phase_window(i, bp)
    alpha = np.asarray(sched.alpha if isinstance(sched, StepSchedule) else sched, float)
    if len(alpha) < stop:
        raise RangeError(f"schedule has {len(alpha)} entries, need {stop}")
    q = np.asarray(q, dtype=float)
    width = phase_end - start + 1
    if q.shape != (width,):
        raise RangeError(f"q must cover {start}..{phase_end} ({width} points), got {q.shape}")
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
        raise RangeError("q must be a probability vector")

    L = compute_L(start, stop).L
    w = alpha[start - 1:stop] * L                          # alpha_s L_s, s = start..stop
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])  # tail[j] = sum_{s >= start+j}
    Gamma = tail[:width + 1]                                # Gamma(t), t = start-1..phase_end
    g_end = Gamma[-1]

    kappa = np.zeros(stop - start + 1)
    sigma = np.empty(width)
    acc = 0.0
    for j in range(width):
        g = Gamma[j + 1]
        kappa[j] = (g_end * q[j] + w[j] * acc) / g
        acc += kappa[j]
        sigma[j] = acc
    return TransferDistribution(i, start, stop, phase_end, kappa, q, Gamma, sigma)


# ---------------------------------------------------------------- deviation statistics

def _window(objectives, alpha, t0, t1):
    F = np.asarray(objectives, dtype=float)
    alpha = np.asarray(alpha.alpha if isinstance(alpha, StepSchedule) else alpha, float)
    if not 1 <= t0 < t1 <= min(F.shape[-1], len(alpha)):
        raise RangeError(f"need 1 <= t0 < t1 <= T, got t0={t0}, t1={t1}")
    return F[..., t0 - 1:t1], alpha[t0 - 1:t1]


def compute_A(objectives, l: int, t0: int, t1: int, sched, G: float, L=None):
    """``sum_{t=l}^{t1} L_t [2 alpha_t (F(x_t) - F(x_l)) - alpha_t^2 G^2]``.

    ``objectives`` holds ``F(x_1..x_T)``; a 2-D array gives one value per row.
    """
    if not t0 <= l <= t1:
        raise RangeError(f"need t0 <= l <= t1, got l={l}")
    F, a = _window(objectives, sched, t0, t1)
    L = compute_L(t0, t1).L if L is None else np.asarray(L)
    j = l - t0
    terms = L[j:] * (2 * a[j:] * (F[..., j:] - F[..., j:j + 1]) - a[j:] ** 2 * G ** 2)
    return terms.sum(axis=-1)


def compute_A_star(objectives, t0: int, t1: int, sched, G: float, f_star: float, L=None):
    F, a = _window(objectives, sched, t0, t1)
    L = compute_L(t0, t1).L if L is None else np.asarray(L)
    return (L * (2 * a * (F - f_star) - a ** 2 * G ** 2)).sum(axis=-1)


def p_dot_A(objectives, p, t0: int, t1: int, sched, G: float):
    """``sum_l p(l) A(l, t1)`` for every row, in O(T) via suffix sums."""
    F, a = _window(objectives, sched, t0, t1)
    p = np.asarray(p, dtype=float)
    if p.shape != (t1 - t0 + 1,):
        raise RangeError("p must have one weight per t in [t0, t1]")
    L = compute_L(t0, t1).L

    def suffix(x):
        return np.flip(np.cumsum(np.flip(x, axis=-1), axis=-1), axis=-1)

    s_f = suffix(2 * L * a * F)
    s_w = suffix(2 * L * a)
    s_q = suffix(L * a ** 2 * G ** 2)
    A = s_f - F * s_w - s_q
    return (A * p).sum(axis=-1)


@dataclass(frozen=True)
class DeviationStats:
    A: float
    A_star: float
    pA: float


def deviation_stats(objectives, l, t0, t1, sched, G, f_star, p=None) -> DeviationStats:
    objectives = np.asarray(objectives, float)
    if p is None:
        p = np.full(t1 - t0 + 1, 1.0 / (t1 - t0 + 1))
    return DeviationStats(
        float(compute_A(objectives, l, t0, t1, sched, G)),
        float(compute_A_star(objectives, t0, t1, sched, G, f_star)),
        float(p_dot_A(objectives, p, t0, t1, sched, G)))


# ---------------------------------------------------------------- Monte-Carlo checks

def _se(x):
    x = np.asarray(x, float)
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def check_lookahead(problem: ProblemInstance, sched, t0: int, t1: int, n_seeds: int,
                    seed0: int = 0, *, n_jobs: int = 1, report=None) -> CheckResult:
    """``sum 2 alpha_t E[F(x_t) - F(x_t0)] <= sum G^2 alpha_t^2`` over ``[t0, t1]``."""
    alpha = np.asarray(sched.alpha if isinstance(sched, StepSchedule) else sched, float)
    if not 1 < t0 < t1 <= len(alpha):
        raise RangeError(f"need 1 < t0 < t1 <= T, got t0={t0}, t1={t1}")
    paths = alpha_paths(problem, alpha, range(seed0, seed0 + n_seeds), n_jobs=n_jobs)
    F = paths[:, t0 - 1:t1]
    a = alpha[t0 - 1:t1]
    per_seed = (2 * a * (F - F[:, :1])).sum(axis=1)
    lhs = float(per_seed.mean())
    rhs = float(problem.G ** 2 * np.sum(a * a))
    slack = SLACK_SE * _se(per_seed) if problem.is_stochastic else 0.0
    report = CertificateReport() if report is None else report
    return report.add("lookahead", {"problem": problem.kind, "t0": t0, "t1": t1,
                                    "n_seeds": n_seeds}, lhs, rhs, slack)


def tail_eta_grid(alpha_t0: float, G: float, multiples=(0.0, 0.5, 1.0, 2.0, 4.0, 8.0)):
    scale = 8 * alpha_t0 ** 2 * G ** 2
    return np.array(multiples) * scale


def check_tail(problem: ProblemInstance, sched, t0: int, t1: int, n_seeds: int,
               seed0: int = 0, *, p=None, etas=None, n_jobs: int = 1,
               report=None) -> CertificateReport:
    """Empirical ``P[(p.A)(t0, t1) > eta] <= exp(-eta / (8 alpha_t0^2 G^2))``.

    The slack is three binomial standard errors evaluated at the bound.
    """
    alpha = np.asarray(sched.alpha if isinstance(sched, StepSchedule) else sched, float)
    if np.any(np.diff(alpha[t0 - 1:t1]) > 0):
        raise RangeError("the tail bound needs nonincreasing steps on [t0, t1]")
    paths = alpha_paths(problem, alpha, range(seed0, seed0 + n_seeds), n_jobs=n_jobs)
    if p is None:
        p = np.full(t1 - t0 + 1, 1.0 / (t1 - t0 + 1))
    pA = p_dot_A(paths, p, t0, t1, alpha, problem.G)
    scale = 8 * alpha[t0 - 1] ** 2 * problem.G ** 2
    etas = tail_eta_grid(alpha[t0 - 1], problem.G) if etas is None else np.asarray(etas)
    report = CertificateReport() if report is None else report
    for eta in etas:
        freq = float(np.mean(pA > eta))
        bound = math.exp(-eta / scale)
        slack = SLACK_SE * math.sqrt(bound * (1 - bound) / n_seeds)
        report.add("tail", {"problem": problem.kind, "t0": t0, "t1": t1,
                            "eta": float(eta), "n_seeds": n_seeds}, freq, bound, slack)
    return report


def compute_tau(ensemble, bp: Breakpoints) -> list:
    """Per-phase argmins of the estimated ``E F(x_t)``; ties go to the smallest t.

    ``tau_0`` is taken over ``[ceil(T/4), T_1]``, ``tau_i`` over
    ``(T_i, T_{i+1}]`` for ``1 <= i <= k`` and ``tau_{k+1} = T``.
    """
    mean = ensemble.mean_objective if isinstance(ensemble, EnsembleSummary) else ensemble
    mean = np.asarray(mean, float)
    if len(mean) != bp.T:
        raise RangeError(f"need {bp.T} mean values, got {len(mean)}")
    lo = bp.quarter_start
    taus = [lo + int(np.argmin(mean[lo - 1:bp.points[1]]))]
    for i in range(1, bp.k + 1):
        a, b = bp.points[i] + 1, bp.points[i + 1]
        taus.append(a + int(np.argmin(mean[a - 1:b])))
    taus.append(bp.T)
    return taus


def check_transfer(problem: ProblemInstance, gamma, n_seeds: int, seed0: int = 0, *,
                   n_jobs: int = 1, report=None) -> CertificateReport:
    """Good-point transfer between consecutive phase argmins, plus the overall bound.

    For ``i >= 1``: ``E F(x_tau_{i+1}) - E F(x_tau_i) <= 5 G^2 gamma_T 2^-i / beta^2``;
    for ``i = 0`` the right side is ``5 G^2 gamma_T / beta^4``.  The final row
    checks ``E F(x_T) <= 5 G^2 gamma_T (beta^-2 + beta^-4) + min E F(y_t)``
    over ``[ceil(T/4), T_1]``.  Differences use the conservative slack
    ``3 (se_a + se_b)``.
    """
    gamma_sched = gamma if isinstance(gamma, StepSchedule) else StepSchedule.from_array(gamma)
    T = gamma_sched.T
    bp = compute_breakpoints(T)
    beta = estimate_decay_constant(gamma_sched).beta
    alpha = modify_schedule(gamma_sched, T)
    ens = run_ensemble(problem, RunConfig(T, alpha), n_seeds, seed0, n_jobs=n_jobs)
    taus = compute_tau(ens, bp)
    mean, se = ens.mean_objective, ens.stderr
    G2g = 5 * problem.G ** 2 * gamma_sched.alpha[-1]
    report = CertificateReport() if report is None else report
    for i in range(0, bp.k + 1):
        a, b = taus[i], taus[i + 1]
        rhs = G2g / beta ** 4 if i == 0 else G2g * 2.0 ** -i / beta ** 2
        report.add("transfer", {"problem": problem.kind, "T": T, "i": i, "tau_i": a,
                                "tau_next": b}, mean[b - 1] - mean[a - 1], rhs,
                   SLACK_SE * (se[a - 1] + se[b - 1]))
    # x_t = y_t up to T_1, so the base-schedule minimum over [ceil(T/4), T_1] is
    # read off the modified run
    lo, hi = bp.quarter_start, bp.points[1]
    j = lo - 1 + int(np.argmin(mean[lo - 1:hi]))
    report.add("general_bound", {"problem": problem.kind, "T": T, "beta": beta},
               mean[-1], G2g * (beta ** -2 + beta ** -4) + mean[j],
               SLACK_SE * (se[-1] + se[j]))
    return report


def check_high_probability(problem: ProblemInstance, gamma, n_seeds: int, seed0: int = 0, *,
                           deltas=(0.5, 0.1, 0.01), report=None) -> CertificateReport:
    """Pathwise version of the overall bound, per seed.

    With probability at least ``1 - delta/2``,
    ``F(x_T) <= gamma_T G^2 (120 log(1/delta) + 400)(beta^-2 + beta^-4) + sum_s q(s) F(y_s)``
    for a fixed distribution ``q`` on ``[ceil(T/4), T_1]``.  Checked for the uniform
    ``q`` and the point mass at ``T_1``; the violation frequency is compared with
    ``delta/2`` plus a binomial slack at the bound.
    """
    gamma_sched = gamma if isinstance(gamma, StepSchedule) else StepSchedule.from_array(gamma)
    T = gamma_sched.T
    bp = compute_breakpoints(T)
    beta = estimate_decay_constant(gamma_sched).beta
    alpha = modify_schedule(gamma_sched, T)
    seeds = range(seed0, seed0 + n_seeds)
    F = alpha_paths(problem, alpha.alpha, seeds)
    # y_t = x_t for t <= T_1 because the two schedules agree there
    window = F[:, bp.quarter_start - 1:bp.points[1]]
    averages = {"uniform": window.mean(axis=1), "point_T1": window[:, -1]}
    scale = gamma_sched.alpha[-1] * problem.G ** 2 * (beta ** -2 + beta ** -4)
    report = CertificateReport() if report is None else report
    for name, avg in averages.items():
        excess = F[:, -1] - avg
        for delta in deltas:
            rhs = scale * (120 * math.log(1 / delta) + 400)
            freq = float(np.mean(excess > rhs))
            b = delta / 2
            report.add("high_probability", {"problem": problem.kind, "T": T, "q": name,
                                            "delta": delta, "n_seeds": n_seeds},
                       freq, b, SLACK_SE * math.sqrt(b * (1 - b) / n_seeds))
    return report


# ---------------------------------------------------------------- exact suites

def default_breakpoint_horizons(t_max: int = 4096, dyadic_max: int = 20) -> list:
    return list(range(4, t_max + 1)) + [1 << j for j in range(t_max.bit_length(), dyadic_max + 1)
                                        if (1 << j) > t_max]


def check_breakpoints(horizons=None, report=None) -> CertificateReport:
    """Strict monotonicity, ``T_k = T - 1`` and ``4 (T_{i+2} - T_{i+1}) >= T_{i+1} - T_i``."""
    report = CertificateReport() if report is None else report
    for T in default_breakpoint_horizons() if horizons is None else horizons:
        bp = compute_breakpoints(T)
        pts = np.asarray(bp.points)
        gaps = np.diff(pts)
        report.add("breakpoint_monotone", {"T": T}, 1 - gaps.min(), 0)
        report.add("breakpoint_last", {"T": T}, abs(pts[bp.k] - (T - 1)), 0)
        report.add("division_length", {"T": T}, np.max(gaps[:-1] - 4 * gaps[1:]), 0)
    return report


def check_weights(rs=(2, 10, 10 ** 3, 10 ** 5, 10 ** 6), gammas=(0.5, 1.0, 2.0),
                  report=None) -> CertificateReport:
    """``1/(e r) <= L_t <= 1/r`` and ``lambda_i <= (1 + 1/r)^i lambda_0`` for ``i <= r``."""
    report = CertificateReport() if report is None else report
    for r in rs:
        L = compute_L(1, r).L if r > 1 else np.array([1 / math.e])
        report.add("L_upper", {"r": r}, L.max(), 1.0 / r)
        report.add("L_lower", {"r": r}, 1.0 / (math.e * r), L.min())
        for g in gammas:
            lam = lambda_sequence(g, r)
            growth = np.exp(np.arange(r + 1) * math.log1p(1.0 / r)) * lam[0]
            report.add("lambda_growth", {"r": r, "Gamma": g}, np.max(lam / growth), 1.0)
    return report


def check_kappa(n_configs: int = 1000, seed: int = 0, t_max: int = 4096,
                report=None) -> CertificateReport:
    """Mass, sign and support of ``kappa`` for random horizons, phases, schedules and ``q``."""
    report = CertificateReport() if report is None else report
    rng = np.random.default_rng(seed)
    for _ in range(n_configs):
        T = int(rng.integers(8, t_max + 1))
        bp = compute_breakpoints(T)
        i = int(rng.integers(0, bp.k))
        start, phase_end, _ = _phase_window(i, bp)
        q = rng.dirichlet(np.ones(phase_end - start + 1))
        base = "flat" if rng.random() < 0.5 else "harmonic"
        gamma = np.full(T, 1.0 / math.sqrt(T)) if base == "flat" else 1.0 / np.arange(1, T + 1)
        kd = compute_kappa(q, i, bp, modify_schedule(StepSchedule.from_array(gamma), T))
        params = {"T": T, "i": i, "base": base}
        report.add("kappa_mass", params, abs(kd.kappa.sum() - 1.0), 1e-9)
        report.add("kappa_nonneg", params, -kd.kappa.min(), 0)
        report.add("kappa_support", params, np.abs(kd.kappa[phase_end - start + 1:]).max(initial=0), 0)
    return report
