import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lastiterate import abs_quadratic_problem, pure_quadratic_problem
from lastiterate.exceptions import ConfigError, EmptyReportError, NonPositiveSuboptimalityError
from lastiterate.figure import emit_figure, load_series, render_svg
from lastiterate.harness import (
    ExperimentSpec,
    MethodSpec,
    explicit_bound,
    fit_rate,
    fit_slope,
    paired_gap,
    preset_spec,
    parse_flat,
    ratio_trend,
    run_experiment,
)
from lastiterate.reporting import config_digest, read_csv, read_header

methods = st.lists(
    st.builds(MethodSpec, st.sampled_from(["harmonic", "strong_modified", "constant"]),
              st.sampled_from(["last", "suffix_quarter", "running"])),
    max_size=3).map(tuple)
params = st.dictionaries(st.sampled_from(["d", "n", "reg", "sigma"]),
                         st.one_of(st.integers(1, 500), st.floats(1e-3, 1e3)))


@given(st.sampled_from(["svm", "lasso"]), params, st.integers(0, 99), methods,
       st.integers(4, 1 << 20), st.integers(1, 5000), st.integers(0, 10 ** 6),
       st.one_of(st.none(), st.floats(1e-3, 1e3)), st.one_of(st.none(), st.floats(1e-3, 1e3)),
       st.integers(0, 500))
def test_config_text_round_trip(problem, pp, pseed, ms, T, n, s0, C, lam, points):
    spec = ExperimentSpec(problem, pp, pseed, ms, T, n, s0, C, lam, points)
    assert ExperimentSpec.from_text(spec.to_text()) == spec
    assert ExperimentSpec.from_dict(spec.to_dict()) == spec


def test_parse_flat_comments_and_blanks():
    assert parse_flat("# head\n\na = 1  # tail\nb=x\n") == [("a", "1", 3), ("b", "x", 4)]


@pytest.mark.parametrize("text, line", [
    ("problem = svm\nT 100\n", 2),
    ("T = 8\nT = 16\n", 2),
    ("problem = svm\n\nwidth = 3\n", 3),
    ("T = many\n", 1),
    ("methods = harmonic:sideways\n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        ExperimentSpec.from_text(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}: ")


def test_preset_specs():
    svm = preset_spec("svm")
    assert svm.T == 2 ** 17 and svm.n_seeds == 100
    assert [m.label for m in svm.methods][:2] == ["harmonic:last", "strong_modified:last"]
    assert preset_spec("lasso", T=1024).T == 1024


def test_overrides_ignore_none():
    spec = preset_spec("svm")
    assert spec.with_overrides(T=None, n_seeds=7).n_seeds == 7
    assert spec.with_overrides(T=None).T == spec.T


def small_spec(tmp_path, **kw):
    base = dict(problem="svm", problem_params={"d": 4, "n": 30}, T=256, n_seeds=20,
                methods=("harmonic:last", "strong_modified:last"), points=16,
                out=str(tmp_path / "a.csv"))
    base.update(kw)
    return ExperimentSpec(**base)


def test_rerun_from_header_is_byte_identical(tmp_path):
    spec = small_spec(tmp_path)
    run_experiment(spec)
    again = ExperimentSpec.from_file(tmp_path / "a.csv").with_overrides(out=str(tmp_path / "b.csv"))
    run_experiment(again)
    a = (tmp_path / "a.csv").read_bytes()
    b = (tmp_path / "b.csv").read_bytes()
    assert a == b
    meta = read_header(tmp_path / "a.csv")
    assert meta["config_hash"] == config_digest(meta["config"]) and len(meta["config_hash"]) == 64


def test_report_rows(tmp_path):
    rep = run_experiment(small_spec(tmp_path, points=0, T=64))
    _, rows = read_csv(tmp_path / "a.csv")
    assert len(rows) == 2 * 64
    assert list(rows[0]) == ["method", "t", "mean_objective", "mean_subopt", "stderr", "n_seeds"]
    assert rows[-1]["t"] == "64" and rows[-1]["n_seeds"] == "20"
    assert rep.times()[-1] == 64


def test_deterministic_lasso_has_zero_stderr(tmp_path):
    spec = ExperimentSpec("lasso", {"d": 10, "s": 4, "n": 12}, T=128, n_seeds=3,
                          out=str(tmp_path / "l.csv"))
    rep = run_experiment(spec)
    assert all(np.all(s.stderr == 0) for s in rep.summaries.values())
    assert set(rep.summaries) == {"constant:last", "weak_modified:last", "constant:running"}


def test_paired_methods_share_seeds():
    spec = ExperimentSpec("svm", {"d": 3, "n": 20}, methods=("harmonic:last", "harmonic:last"),
                          T=64, n_seeds=5)
    rep = run_experiment(spec)
    (only,) = rep.summaries.values()
    a, se = paired_gap(only, only)
    assert a == 0 and se == 0


def test_fit_slope_recovers_power_law():
    T = 2.0 ** np.arange(6, 15)
    assert fit_slope(T, 3.0 / T) == pytest.approx(-1, abs=1e-6)
    assert fit_slope(T, 0.7 / np.sqrt(T)) == pytest.approx(-0.5, abs=1e-6)


def test_explicit_bound_values():
    assert explicit_bound("weak_modified", 100, 5, 2) == pytest.approx(15 * 5 * 2 / 10)
    assert explicit_bound("strong_modified", 26, 5, 2, lam=1) == pytest.approx(125)
    assert np.isnan(explicit_bound("harmonic", 10, 5, 2))


def test_fit_rate_on_deterministic_quadratic():
    p = pure_quadratic_problem().full_batch()
    fit = fit_rate(p, "weak_modified", [16, 32, 64, 128], 1, f_star=0.0)
    assert fit.slope_ci == (fit.slope, fit.slope)
    assert np.all(fit.subopt > 0)


def test_fit_rate_and_ratio_on_stochastic_problem():
    p = abs_quadratic_problem()
    grid = [64, 128, 256, 512]
    a = fit_rate(p, "harmonic", grid, 200, n_boot=200)
    b = fit_rate(p, "strong_modified", grid, 200, n_boot=200)
    assert a.slope_ci[0] <= a.slope <= a.slope_ci[1]
    assert b.max_ratio < 1
    trend = ratio_trend(a, b, n_boot=200)
    assert np.all(trend.ci_lo <= trend.ratio) and np.all(trend.ratio <= trend.ci_hi)


def test_fit_rate_errors():
    p = abs_quadratic_problem()
    with pytest.raises(ValueError):
        fit_rate(p, "harmonic", [64, 128, 256], 10)
    with pytest.raises(ValueError):
        fit_rate(p, "harmonic", [64, 32, 256, 512], 10)
    with pytest.raises(NonPositiveSuboptimalityError):
        fit_rate(p, "harmonic", [64, 128, 256, 512], 10, f_star=10.0)


def polylines(svg):
    return re.findall(r'<polyline class="series" data-method="([^"]*)"[^>]*points="([^"]*)"', svg)


def test_figure_constant_series_is_horizontal():
    svg = render_svg({"flat": (np.arange(1, 11), np.full(10, 0.5))})
    ((name, pts),) = polylines(svg)
    ys = {p.split(",")[1] for p in pts.split()}
    assert name == "flat" and len(ys) == 1


def test_figure_from_report(tmp_path):
    run_experiment(small_spec(tmp_path))
    svg = emit_figure(tmp_path / "a.csv", tmp_path / "a.svg", log_y=True, title="demo")
    lines = polylines(svg)
    assert [n for n, _ in lines] == ["harmonic:last", "strong_modified:last"]
    assert svg.count('class="legend"') == 2
    assert (tmp_path / "a.svg").read_text() == svg
    assert set(load_series(tmp_path / "a.csv")) == {n for n, _ in lines}


def test_figure_rejects_empty_report(tmp_path):
    with pytest.raises(EmptyReportError):
        render_svg({})
    path = tmp_path / "empty.csv"
    path.write_text("method,t,mean_objective,mean_subopt,stderr,n_seeds\n")
    with pytest.raises(EmptyReportError):
        emit_figure(path)
