"""Experiment configs, paired multi-method runs and rate fits.

Config files are flat ``key = value`` text::

    problem = svm
    problem.d = 30
    methods = harmonic:last, strong_modified:last, harmonic:suffix_quarter
    T = 16384
    n_seeds = 100

Methods are ``family:mode`` with mode one of ``last``, ``suffix_quarter``
or ``running``.  All methods of an experiment share the problem, horizon and
seeds, so seed ``s`` sees the same oracle draws under every schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .exceptions import ConfigError, NonPositiveSuboptimalityError
from .problems import ProblemInstance, load_problem, make_problem, reference_optimum
from .reporting import config_digest, read_header, write_csv
from .schedules import make_schedule
from .sgd import AVERAGING_MODES, EnsembleSummary, RunConfig, run_ensemble

EXPERIMENT_COLUMNS = ["method", "t", "mean_objective", "mean_subopt", "stderr", "n_seeds"]

PRESETS = {
    "lasso": """\
problem = lasso
problem.d = 100
problem.n = 80
problem.reg = 0.2
problem.s = 60
problem.sigma = 0.1
methods = constant:last, weak_modified:last, constant:running
T = 524288
n_seeds = 1
C = 4.0
""",
    "svm": """\
problem = svm
problem.d = 30
problem.eta = 1.0
problem.n = 500
problem.reg = 0.1
problem.sigma = 5.0
methods = harmonic:last, strong_modified:last, harmonic:suffix_quarter
T = 131072
n_seeds = 100
""",
}


# ---------------------------------------------------------------- config

def parse_flat(text: str) -> list:
    """``(key, value, line)`` triples from ``key = value`` lines; ``#`` starts a comment."""
    out, seen = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        out.append((key, value, lineno))
    return out


@dataclass(frozen=True)
class MethodSpec:
    family: str
    mode: str = "last"

    def __post_init__(self):
        if self.mode not in AVERAGING_MODES:
            raise ValueError(f"unknown averaging mode {self.mode!r}; expected {AVERAGING_MODES}")

    @property
    def label(self) -> str:
        return f"{self.family}:{self.mode}"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        family, _, mode = text.strip().partition(":")
        return cls(family.strip(), mode.strip() or "last")


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _show(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class ExperimentSpec:
    problem: str = "svm"
    problem_params: dict = field(default_factory=dict)
    problem_seed: int = 0
    methods: tuple = ()
    T: int = 1024
    n_seeds: int = 1
    seed0: int = 0
    C: float | None = None
    lam: float | None = None
    points: int = 0          # 0 writes every t; otherwise about this many log-spaced t
    out: str | None = None

    _KEYS = {"problem", "problem_seed", "methods", "T", "n_seeds", "seed0", "C", "lambda",
             "points", "out"}

    def __post_init__(self):
        self.methods = tuple(m if isinstance(m, MethodSpec) else MethodSpec.parse(m)
                             for m in self.methods)
        if self.T < 4:
            raise ValueError(f"T must be >= 4, got {self.T}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")

    # -- text form

    @classmethod
    def from_text(cls, text: str) -> "ExperimentSpec":
        kw: dict = {"problem_params": {}}
        for key, value, lineno in parse_flat(text):
            try:
                if key.startswith("problem.") and len(key) > 8:
                    kw["problem_params"][key[8:]] = _scalar(value)
                elif key not in cls._KEYS:
                    raise ConfigError(f"unknown key {key!r}", lineno)
                elif key == "problem":
                    kw["problem"] = value
                elif key == "methods":
                    kw["methods"] = tuple(MethodSpec.parse(m) for m in value.split(",") if m.strip())
                elif key in ("T", "n_seeds", "seed0", "problem_seed", "points"):
                    kw[key] = int(value)
                elif key in ("C", "lambda"):
                    kw["lam" if key == "lambda" else key] = float(value)
                else:
                    kw[key] = value
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        try:
            return cls(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_text(self) -> str:
        lines = [f"problem = {self.problem}"]
        lines += [f"problem.{k} = {_show(v)}" for k, v in sorted(self.problem_params.items())]
        lines.append(f"problem_seed = {self.problem_seed}")
        if self.methods:
            lines.append("methods = " + ", ".join(m.label for m in self.methods))
        lines += [f"T = {self.T}", f"n_seeds = {self.n_seeds}", f"seed0 = {self.seed0}"]
        if self.C is not None:
            lines.append(f"C = {self.C!r}")
        if self.lam is not None:
            lines.append(f"lambda = {self.lam!r}")
        lines.append(f"points = {self.points}")
        if self.out is not None:
            lines.append(f"out = {self.out}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        """Read a config file, or the header of a report written by :func:`run_experiment`."""
        meta = read_header(path)
        if meta is not None and "config" in meta:
            return cls.from_dict(meta["config"])
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["methods"] = [m.label for m in self.methods]
        d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**{k: (tuple(v) if k == "methods" else v) for k, v in d.items()})

    def with_overrides(self, **kw) -> "ExperimentSpec":
        """Replace fields whose override is not None (command-line flags win)."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -- resolution

    def build_problem(self) -> ProblemInstance:
        if self.problem.endswith(".csv"):
            return load_problem(self.problem)
        return make_problem(self.problem, seed=self.problem_seed, **self.problem_params)

    def resolved_methods(self, problem: ProblemInstance) -> tuple:
        if self.methods:
            return self.methods
        if problem.kind == "lasso":
            names = ("constant:last", "weak_modified:last", "constant:running")
        elif problem.lam > 0:
            names = ("harmonic:last", "strong_modified:last", "harmonic:suffix_quarter")
        else:
            names = ("inv_sqrt_t:last", "weak_modified:last", "inv_sqrt_t:suffix_quarter")
        return tuple(MethodSpec.parse(n) for n in names)


def preset_spec(name: str, **overrides) -> ExperimentSpec:
    return ExperimentSpec.from_text(PRESETS[name]).with_overrides(**overrides)


def schedule_for(problem: ProblemInstance, family: str, T: int, C=None, lam=None):
    """Schedule with defaults ``C = D/G`` and ``lambda`` = the problem's modulus."""
    C = problem.D / problem.G if C is None else C
    lam = problem.lam if lam is None else lam
    return make_schedule(family, T, C=C, lam=lam if lam and lam > 0 else None)


# ---------------------------------------------------------------- experiments

@dataclass(frozen=True, eq=False)
class ExperimentReport:
    spec: ExperimentSpec
    summaries: dict            # method label -> EnsembleSummary

    def times(self) -> np.ndarray:
        T = self.spec.T
        if self.spec.points <= 0:
            return np.arange(1, T + 1)
        grid = np.unique(np.round(np.geomspace(1, T, self.spec.points)).astype(int))
        return np.union1d(grid, [T])

    def rows(self):
        ts = self.times()
        for label, s in self.summaries.items():
            for t in ts:
                yield (label, int(t), s.mean_objective[t - 1], s.mean_subopt[t - 1],
                       s.stderr[t - 1], s.n_seeds)

    def write_csv(self, path) -> None:
        write_csv(path, EXPERIMENT_COLUMNS, self.rows(), self.spec.to_dict())

    @property
    def config_hash(self) -> str:
        return config_digest(self.spec.to_dict())


def run_experiment(spec: ExperimentSpec, *, n_jobs: int = 1) -> ExperimentReport:
    problem = spec.build_problem()
    summaries = {}
    for m in spec.resolved_methods(problem):
        sched = schedule_for(problem, m.family, spec.T, spec.C, spec.lam)
        summaries[m.label] = run_ensemble(problem, RunConfig(spec.T, sched), spec.n_seeds,
                                          spec.seed0, mode=m.mode, n_jobs=n_jobs)
    report = ExperimentReport(spec, summaries)
    if spec.out:
        report.write_csv(spec.out)
    return report


# ---------------------------------------------------------------- rate fits

def fit_slope(T_grid, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(T)``."""
    return float(np.polyfit(np.log(np.asarray(T_grid, float)),
                            np.log(np.asarray(values, float)), 1)[0])


def explicit_bound(family: str, T, G: float, D: float, C=None, lam=None):
    """Stated last-iterate bounds for the two modified families.

    ``weak_modified``: ``4 D^2/(C sqrt T) + 11 G^2 C / sqrt T`` (``15 G D / sqrt T``
    at ``C = D/G``); ``strong_modified``: ``130 G^2 / (lambda T)``.
    """
    T = np.asarray(T, dtype=float)
    if family == "weak_modified":
        C = D / G if C is None else C
        return (4 * D * D / C + 11 * G * G * C) / np.sqrt(T)
    if family == "strong_modified":
        return 130 * G * G / (lam * T)
    return np.full_like(T, np.nan)


@dataclass(frozen=True, eq=False)
class RateFit:
    family: str
    T_grid: np.ndarray
    subopt: np.ndarray
    stderr: np.ndarray
    kept: np.ndarray           # T values used in the fit (mean >= 5 stderr)
    slope: float
    slope_ci: tuple
    bound: np.ndarray
    finals: np.ndarray         # (n_seeds, len(T_grid)) final suboptimality per seed

    @property
    def max_ratio(self) -> float:
        return float(np.nanmax(self.subopt / self.bound)) if np.isfinite(self.bound).any() \
            else float("nan")


def _bootstrap(finals, n_boot, rng, stat):
    n = finals.shape[0]
    out = np.empty(n_boot)
    for b in range(n_boot):
        out[b] = stat(finals[rng.integers(0, n, n)].mean(axis=0))
    return out


def fit_rate(problem: ProblemInstance, family: str, T_grid, n_seeds: int, *, seed0: int = 0,
             C=None, lam=None, mode: str = "last", f_star: float | None = None,
             n_boot: int = 1000, level: float = 0.95, n_jobs: int = 1) -> RateFit:
    """Mean final suboptimality per horizon and its log-log slope.

    The bootstrap resamples seed indices jointly across horizons (runs at
    different ``T`` share seeds).  Without a known optimum the reference uses
    a budget of ten times the largest horizon.
    """
    T_grid = np.asarray(T_grid, dtype=int)
    if len(T_grid) < 4 or np.any(T_grid < 4) or np.any(np.diff(T_grid) <= 0):
        raise ValueError("T_grid needs >= 4 strictly increasing horizons, each >= 4")
    if f_star is None:
        f_star = problem.known_f_star
    if f_star is None:
        f_star = reference_optimum(problem, 10 * int(T_grid[-1]))
    finals = np.empty((n_seeds, len(T_grid)))
    se = np.empty(len(T_grid))
    for j, T in enumerate(T_grid):
        ens: EnsembleSummary = run_ensemble(
            problem, RunConfig(int(T), schedule_for(problem, family, int(T), C, lam)),
            n_seeds, seed0, mode=mode, n_jobs=n_jobs, f_star=f_star)
        finals[:, j] = ens.final_objectives - f_star
        se[j] = ens.stderr[-1]
    mean = finals.mean(axis=0)
    if np.any(mean <= 0):
        bad = T_grid[mean <= 0].tolist()
        raise NonPositiveSuboptimalityError(
            f"mean suboptimality <= 0 at T={bad}; recompute the reference optimum "
            "with a larger budget")
    kept = mean >= 5 * se
    if kept.sum() < 2:
        raise NonPositiveSuboptimalityError("fewer than two horizons rise above the noise")
    slope = fit_slope(T_grid[kept], mean[kept])
    if problem.is_stochastic and n_seeds > 1:
        rng = np.random.default_rng(seed0)

        def stat(m):
            return fit_slope(T_grid[kept], np.maximum(m[kept], np.finfo(float).tiny))

        boots = _bootstrap(finals, n_boot, rng, stat)
        lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2])
        ci = (float(lo), float(hi))
    else:
        ci = (slope, slope)
    lam = problem.lam if lam is None else lam
    bound = explicit_bound(family, T_grid, problem.G, problem.D, C, lam)
    return RateFit(family, T_grid, mean, se, kept, slope, ci, bound, finals)


@dataclass(frozen=True)
class RatioTrend:
    T_grid: np.ndarray
    ratio: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray

    @property
    def nondecreasing(self) -> bool:
        """Each step up either rises or stays within bootstrap noise."""
        return bool(np.all(self.ci_hi[1:] >= self.ci_lo[:-1]))


def ratio_trend(num: RateFit, den: RateFit, *, n_boot: int = 1000, level: float = 0.95,
                seed: int = 0) -> RatioTrend:
    """``subopt(num) / subopt(den)`` per horizon with a paired bootstrap CI."""
    if not np.array_equal(num.T_grid, den.T_grid) or num.finals.shape != den.finals.shape:
        raise ValueError("rate fits must share horizons and seeds")
    ratio = num.subopt / den.subopt
    rng = np.random.default_rng(seed)
    n = num.finals.shape[0]
    boots = np.empty((n_boot, len(ratio)))
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        boots[b] = num.finals[idx].mean(axis=0) / den.finals[idx].mean(axis=0)
    lo, hi = np.quantile(boots, [(1 - level) / 2, (1 + level) / 2], axis=0)
    return RatioTrend(num.T_grid, ratio, lo, hi)


def paired_gap(a: EnsembleSummary, b: EnsembleSummary) -> tuple[float, float]:
    """Mean of ``final(a) - final(b)`` over paired seeds and its standard error."""
    d = a.final_objectives - b.final_objectives
    se = d.std(ddof=1) / math.sqrt(len(d)) if len(d) > 1 else 0.0
    return float(d.mean()), float(se)
