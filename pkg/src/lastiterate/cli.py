"""Command-line entry point: ``lastiterate <command> ...``.

Exit status is 0 when the command succeeds and every requested check
passes, 1 when a check fails and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import certificates as cert
from . import lower_bounds as lb
from .exceptions import ConfigError, SeedRunError
from .figure import emit_figure
from .harness import (
    ExperimentSpec,
    fit_rate,
    paired_gap,
    preset_spec,
    parse_flat,
    ratio_trend,
    run_experiment,
)
from .problems import load_problem, make_problem, save_problem
from .reporting import write_csv
from .schedules import FAMILIES, make_schedule
from .sgd import AVERAGING_MODES, RunConfig, config_hash, run_ensemble, run_sgd

SUITES = ("breakpoints", "weights", "kappa", "lookahead", "tail", "transfer", "highprob")
GAMMA_FAMILIES = ("harmonic", "shifted_harmonic", "inv_sqrt", "geometric", "t_log_t", "const")


# ---------------------------------------------------------------- spec strings

def _kv(text: str) -> dict:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {part!r}")
        try:
            out[key.strip()] = int(value)
        except ValueError:
            try:
                out[key.strip()] = float(value)
            except ValueError:
                out[key.strip()] = value.strip()
    return out


def parse_problem(text: str, seed: int = 0):
    """``kind[:k=v,...]`` or a path to a CSV written by ``problem gen``."""
    if text.endswith(".csv"):
        return load_problem(text)
    kind, _, rest = text.partition(":")
    return make_problem(kind, seed=seed, **_kv(rest))


def parse_schedule(text: str, T: int, problem=None):
    """``family[:C=..,lambda=..]``; missing constants default from the problem."""
    family, _, rest = text.partition(":")
    params = _kv(rest)
    C = params.get("C")
    lam = params.get("lambda", params.get("lam"))
    if problem is not None:
        C = problem.D / problem.G if C is None else C
        lam = (problem.lam or None) if lam is None else lam
    return make_schedule(family, T, C=C, lam=lam)


def gamma_array(text: str, n: int) -> np.ndarray:
    """``name[:scale]`` evaluated at ``t = 1..n``."""
    name, _, scale = text.partition(":")
    c = float(scale) if scale else 1.0
    t = np.arange(1, n + 1, dtype=float)
    if name == "harmonic":
        return c / t
    if name == "shifted_harmonic":
        return c / (t + 1)
    if name == "inv_sqrt":
        return c / np.sqrt(t)
    if name == "geometric":
        return c * np.exp2(-t)
    if name == "t_log_t":
        return c / ((t + 1) * np.log(t + 1))
    if name == "const":
        return np.full(n, c)
    raise ConfigError(f"unknown gamma {name!r}; expected one of {GAMMA_FAMILIES}")


# ---------------------------------------------------------------- commands

def cmd_schedule(args) -> int:
    sched = make_schedule(args.family, args.T, C=args.C, lam=args.lam)
    rows = zip(range(1, sched.T + 1), sched.alpha, sched.phases())
    write_csv(args.out, ["t", "alpha", "phase"], rows,
              {"command": "schedule dump", "family": args.family, "T": args.T,
               "C": args.C, "lambda": args.lam})
    return 0


def cmd_problem(args) -> int:
    params = {k: getattr(args, k) for k in ("d", "s", "n", "sigma", "reg", "eta", "radius")
              if getattr(args, k) is not None}
    problem = make_problem(args.kind, seed=args.seed or 0, **params)
    save_problem(problem, args.out)
    print(json.dumps({**problem.describe(), "G": problem.G, "D": problem.D}, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    seed = args.seed or 0
    problem = parse_problem(args.problem, args.problem_seed)
    sched = parse_schedule(args.schedule, args.T, problem)
    cfg = RunConfig(args.T, sched, seed=seed)
    config = {"command": "run", "problem": args.problem, "problem_seed": args.problem_seed,
              "schedule": args.schedule, "T": args.T, "seed": seed, "n_seeds": args.n_seeds,
              "mode": args.mode, "run_hash": config_hash(problem, cfg)}
    if args.n_seeds == 1 and args.mode == "last":
        trace = run_sgd(problem, cfg)
        rows = zip(range(1, args.T + 1), trace.objective_values, trace.subopt)
        write_csv(args.out, ["t", "objective", "subopt"], rows, config)
        print(f"final objective {float(trace.last)!r}")
        return 0
    ens = run_ensemble(problem, cfg, args.n_seeds, seed, mode=args.mode, n_jobs=args.threads)
    rows = ((t, m, s, ens.n_seeds) for t, m, s in
            zip(range(1, args.T + 1), ens.mean_subopt, ens.stderr))
    write_csv(args.out, ["t", "mean_subopt", "stderr", "n_seeds"], rows, config)
    print(f"final mean suboptimality {float(ens.mean_subopt[-1])!r} +- {float(ens.stderr[-1])!r}")
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        spec = ExperimentSpec.from_file(args.config)
    elif args.preset:
        spec = preset_spec(args.preset)
        if not args.full and args.preset == "svm":
            spec = spec.with_overrides(T=1 << 14)
        if not args.full and args.preset == "lasso":
            spec = spec.with_overrides(T=1 << 15)
    else:
        raise ConfigError("experiment needs --config or --preset")
    spec = spec.with_overrides(T=args.T, n_seeds=args.n_seeds, seed0=args.seed,
                               points=args.points, out=args.out)
    if not spec.out:
        raise ConfigError("experiment needs --out (or 'out = ...' in the config)")
    report = run_experiment(spec, n_jobs=args.threads)
    for label, s in report.summaries.items():
        print(f"{label:32s} final {s.mean_objective[-1]:.6g} +- {s.stderr[-1]:.2g}")
    labels = list(report.summaries)
    if len(labels) >= 2 and report.summaries[labels[0]].n_seeds > 1:
        gap, se = paired_gap(report.summaries[labels[0]], report.summaries[labels[1]])
        print(f"paired gap {labels[0]} - {labels[1]}: {gap:.6g} (se {se:.2g})")
    return 0


def _grid(text: str) -> list:
    if ":" in text:
        lo, hi, *step = (int(v) for v in text.split(":"))
        return [1 << j for j in range(lo, hi + 1, step[0] if step else 1)]
    return [int(v) for v in text.split(",")]


def cmd_ratefit(args) -> int:
    problem = parse_problem(args.problem, args.problem_seed)
    grid = _grid(args.grid)
    fit = fit_rate(problem, args.family, grid, args.n_seeds, seed0=args.seed or 0, C=args.C,
                   lam=args.lam, mode=args.mode, n_jobs=args.threads)
    rows = zip(fit.T_grid, fit.subopt, fit.stderr, fit.bound, fit.kept)
    config = {"command": "ratefit", "problem": args.problem, "family": args.family,
              "grid": grid, "n_seeds": args.n_seeds, "seed0": args.seed or 0, "mode": args.mode}
    if args.out:
        write_csv(args.out, ["T", "mean_subopt", "stderr", "bound", "kept"], rows, config)
    print(f"slope {fit.slope:.4f}  95% CI [{fit.slope_ci[0]:.4f}, {fit.slope_ci[1]:.4f}]")
    if np.isfinite(fit.bound).any():
        print(f"max subopt / explicit bound {fit.max_ratio:.4g}")
    ok = True
    if args.slope_window:
        lo, hi = (float(v) for v in args.slope_window.split(","))
        inside = fit.slope_ci[1] >= lo and fit.slope_ci[0] <= hi
        print(f"slope window [{lo}, {hi}]: {'pass' if inside else 'FAIL'}")
        ok &= inside
    if args.compare:
        base = fit_rate(problem, args.compare, grid, args.n_seeds, seed0=args.seed or 0,
                        C=args.C, lam=args.lam, mode=args.mode, n_jobs=args.threads)
        trend = ratio_trend(base, fit)
        print("ratio " + " ".join(f"{r:.4g}" for r in trend.ratio))
        print(f"ratio nondecreasing: {'pass' if trend.nondecreasing else 'FAIL'}")
        ok &= trend.nondecreasing
    if args.bound_check and np.isfinite(fit.bound).any():
        under = fit.max_ratio <= 1
        print(f"below explicit bound: {'pass' if under else 'FAIL'}")
        ok &= under
    return 0 if ok else 1


def cmd_certify(args) -> int:
    seed0 = args.seed or 0
    report = cert.CertificateReport()
    if args.suite == "breakpoints":
        cert.check_breakpoints(report=report)
    elif args.suite == "weights":
        cert.check_weights(report=report)
    elif args.suite == "kappa":
        cert.check_kappa(args.n_configs, seed0, report=report)
    else:
        problem = parse_problem(args.problem, args.problem_seed)
        T = args.T
        if args.suite in ("transfer", "highprob"):
            base = args.family.replace("_modified", "")
            base = {"weak": "constant", "strong": "harmonic"}.get(base, base)
            gamma = parse_schedule(base, T, problem)
            if args.suite == "transfer":
                cert.check_transfer(problem, gamma, args.n_seeds, seed0, n_jobs=args.threads,
                                    report=report)
            else:
                cert.check_high_probability(problem, gamma, args.n_seeds, seed0, report=report)
        else:
            sched = parse_schedule(args.family, T, problem)
            t0 = args.t0 or T // 2
            t1 = args.t1 or T
            if args.suite == "lookahead":
                cert.check_lookahead(problem, sched, t0, t1, args.n_seeds, seed0,
                                     n_jobs=args.threads, report=report)
            else:
                cert.check_tail(problem, sched, t0, t1, args.n_seeds, seed0,
                                n_jobs=args.threads, report=report)
    if args.out:
        report.write_csv(args.out, {"command": "certify", **{k: v for k, v in vars(args).items()
                                                             if k not in ("func", "out")}})
    fails = report.failures()
    print(f"{args.suite}: {len(report.results) - len(fails)}/{len(report.results)} checks pass")
    for f in fails[:10]:
        print(f"  FAIL {f.check} {json.dumps(f.params)} margin {f.margin:.3g}")
    return 0 if not fails else 1


def cmd_lowerbound(args) -> int:
    seed = args.seed or 0
    config = {"command": f"lowerbound {args.which}", **{k: v for k, v in vars(args).items()
                                                        if k not in ("func", "out", "which")}}
    if args.which == "recursion":
        rec = lb.expected_square_recursion(gamma_array(args.gamma, args.T), args.T)
        rows = zip(range(1, args.T + 1), rec.expected_sq, rec.lower_bound)
        ok = bool(np.all(rec.expected_sq >= rec.lower_bound * (1 - 1e-12)))
        header = ["t", "expected_sq", "lower_bound"]
    elif args.which == "drift":
        res = lb.simulate_drift(gamma_array(args.gamma, args.T), args.T, args.n_seeds, seed)
        rows = zip(range(1, args.T + 1), res.mean_abs, res.half_min)
        ok = len(res.violations()) == 0
        header = ["t", "mean_abs", "half_min_1_gamma"]
    elif args.which == "events":
        ests = [lb.estimate_event_Ak(k, args.n_trials, seed)
                for k in range(args.kmin, args.kmax + 1)]
        rows = [(e.k, e.p_hat, e.ci_lo, e.ci_hi, e.oracle) for e in ests]
        ok = all(e.agrees() for e in ests)
        fit = lb.event_decay_constant(ests)
        print(f"fitted C = max_k P(A_k^c) 2^(k/2) / k = {fit['C_fit']:.4g}")
        header = ["k", "p_akc_hat", "ci_lo", "ci_hi", "oracle"]
    else:
        name, _, scale = args.gamma.partition(":")
        if name in lb.NAMED_LOG_SCHEDULES and not scale:
            diag = lb.schedule_trichotomy(name, args.K, c0=args.c0, d0=args.d0,
                                          window=args.window)
        else:
            diag = lb.schedule_trichotomy(gamma_array(args.gamma, (1 << (args.K + 1)) - 1),
                                          args.K, c0=args.c0, d0=args.d0, window=args.window)
        rows = [(k, diag.eta[j], diag.lam[j],
                 "|".join(f for f, lv in diag.witnesses.items() if k in lv))
                for j, k in enumerate(diag.levels)]
        ok = bool(diag.classification)
        print(f"flags: {', '.join(diag.classification) or 'none'}")
        header = ["k", "eta", "lambda", "flags"]
    if args.out:
        write_csv(args.out, header, rows, config)
    print(f"{args.which}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_figure(args) -> int:
    emit_figure(args.report, args.out, column=args.column, log_y=args.log_y, title=args.title)
    return 0


# ---------------------------------------------------------------- parser

def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="seed (or first seed)")
    parser.add_argument("--threads", type=int, default=default, help="worker threads")
    parser.add_argument("--out", default=default, help="output path")
    parser.add_argument("--config", default=default,
                        help="flat 'key = value' file supplying option defaults")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lastiterate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        sp = sub.add_parser(name, **kw)
        _global_flags(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    s = add("schedule", cmd_schedule, help="dump a step-size schedule")
    s.add_argument("action", choices=["dump"])
    s.add_argument("--family", required=True, choices=FAMILIES[:-1])
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--C", type=float)
    s.add_argument("--lambda", dest="lam", type=float)

    s = add("problem", cmd_problem, help="generate and save a problem instance")
    s.add_argument("action", choices=["gen"])
    s.add_argument("--kind", required=True, choices=["lasso", "svm", "absquad", "quad"])
    for name, typ in (("d", int), ("s", int), ("n", int), ("sigma", float), ("reg", float),
                      ("eta", float), ("radius", float)):
        s.add_argument(f"--{name}", type=typ)

    s = add("run", cmd_run, help="run SGD for one seed or an ensemble")
    s.add_argument("--problem", required=True, help="kind[:k=v,...] or a problem CSV")
    s.add_argument("--problem-seed", type=int, default=0)
    s.add_argument("--schedule", required=True, help="family[:C=..,lambda=..]")
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--n-seeds", type=int, default=1)
    s.add_argument("--mode", choices=AVERAGING_MODES, default="last")

    s = add("experiment", cmd_experiment, help="paired multi-method experiment")
    s.add_argument("--preset", choices=["lasso", "svm"], help="start from a preset")
    s.add_argument("--full", action="store_true", help="preset at its full horizon")
    s.add_argument("--T", type=int)
    s.add_argument("--n-seeds", type=int)
    s.add_argument("--points", type=int)

    s = add("ratefit", cmd_ratefit, help="fit the log-log rate of the final suboptimality")
    s.add_argument("--problem", default="absquad")
    s.add_argument("--problem-seed", type=int, default=0)
    s.add_argument("--family", default="strong_modified")
    s.add_argument("--grid", default="8:14:2", help="lo:hi[:step] exponents or T1,T2,...")
    s.add_argument("--n-seeds", type=int, default=2000)
    s.add_argument("--mode", choices=AVERAGING_MODES, default="last")
    s.add_argument("--C", type=float)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--compare", help="baseline family for the ratio trend")
    s.add_argument("--slope-window", help="lo,hi")
    s.add_argument("--bound-check", action="store_true")

    s = add("certify", cmd_certify, help="numerical certificates")
    s.add_argument("--suite", required=True, choices=SUITES)
    s.add_argument("--problem", default="absquad")
    s.add_argument("--problem-seed", type=int, default=0)
    s.add_argument("--family", default="strong_modified")
    s.add_argument("--T", type=int, default=4096)
    s.add_argument("--t0", type=int)
    s.add_argument("--t1", type=int)
    s.add_argument("--n-seeds", type=int, default=2000)
    s.add_argument("--n-configs", type=int, default=1000)

    s = add("lowerbound", cmd_lowerbound, help="lower-bound constructions")
    s.add_argument("which", choices=["recursion", "drift", "events", "trichotomy"])
    s.add_argument("--gamma", default="harmonic", help=f"{'|'.join(GAMMA_FAMILIES)}[:scale]")
    s.add_argument("--T", type=int, default=1024)
    s.add_argument("--n-seeds", type=int, default=2000)
    s.add_argument("--kmin", type=int, default=4)
    s.add_argument("--kmax", type=int, default=12)
    s.add_argument("--n-trials", type=int, default=20000)
    s.add_argument("--K", type=int, default=20)
    s.add_argument("--c0", type=float, default=10.0)
    s.add_argument("--d0", type=float, default=0.1)
    s.add_argument("--window", type=int, default=5)

    s = add("figure", cmd_figure, help="render an experiment CSV as SVG")
    s.add_argument("--report", required=True)
    s.add_argument("--column", default="mean_objective")
    s.add_argument("--log-y", action="store_true")
    s.add_argument("--title", default="")
    return p


def _apply_config(parser, argv):
    """Feed a flat config file in as defaults of the chosen subcommand; flags win."""
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    config = None
    for j, a in enumerate(argv):
        if a == "--config" and j + 1 < len(argv):
            config = argv[j + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    if config is None or command in (None, "experiment"):
        return
    sub = choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value, line in parse_flat(open(config).read()):
        dest = key.replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        action = known.get(dest)
        if action is None:
            raise ConfigError(f"unknown option {key!r} for {command}", line)
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes")
        else:
            try:
                defaults[dest] = action.type(value) if action.type else value
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line) from None
        action.required = False
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        for key in ("seed", "threads", "out", "config"):
            if not hasattr(args, key):
                setattr(args, key, None)
        args.threads = args.threads or 1
        return args.func(args)
    except (ValueError, SeedRunError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
