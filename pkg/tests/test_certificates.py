import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lastiterate import (
    abs_quadratic_problem,
    compute_breakpoints,
    gen_lasso,
    standard_schedule,
    strong_schedule,
    weak_schedule,
)
from lastiterate import certificates as C
from lastiterate.exceptions import RangeError

# 30-digit evaluation of L_2 = 1/(2e), L_1 = L_2 + L_2^2
L2_R2 = 0.183939720585721160797761885081
L1_R2 = 0.217773541394874333771261758824


def test_L_two_point_values():
    w = C.compute_L(1, 2)
    assert w.at(2) == pytest.approx(L2_R2, rel=1e-15)
    assert w.at(1) == pytest.approx(L1_R2, rel=1e-15)


@given(st.integers(1, 10 ** 4), st.integers(1, 3000))
def test_L_recursion_and_bounds(t0, width):
    w = C.compute_L(t0, t0 + width)
    r = width + 1
    assert w.at(t0 + width) == 1 / (math.e * r)
    assert np.all(w.L[:-1] == w.L[1:] + w.L[1:] ** 2)
    assert w.L.max() <= 1 / r and w.L.min() >= 1 / (math.e * r)


def test_L_bounds_at_a_million():
    w = C.compute_L(1, 10 ** 6)
    assert w.L.max() <= 1e-6 and w.L.min() >= 1 / (math.e * 1e6)


def test_L_empty_range():
    with pytest.raises(RangeError):
        C.compute_L(5, 5)


@settings(max_examples=30)
@given(st.sampled_from([0.5, 1.0, 2.0]), st.integers(2, 5000))
def test_lambda_growth(gamma, r):
    lam = C.lambda_sequence(gamma, r)
    growth = (1 + 1 / r) ** np.arange(r + 1) * lam[0]
    assert np.all(lam <= growth * (1 + 1e-12))


def naive_kappa(q, i, bp, alpha):
    """Direct evaluation: Gamma(t) summed term by term for each t."""
    start = bp.quarter_start if i == 0 else bp.points[i] + 1
    end, stop = bp.points[i + 1], bp.points[i + 2]
    L = C.compute_L(start, stop).L

    def Gamma(t):
        return sum(alpha[s - 1] * L[s - start] for s in range(t + 1, stop + 1))

    kappa, acc = {}, 0.0
    for t in range(start, end + 1):
        kappa[t] = (Gamma(end) * q[t - start] + alpha[t - 1] * L[t - start] * acc) / Gamma(t)
        acc += kappa[t]
    return kappa, Gamma


def test_kappa_point_mass_T16():
    bp = compute_breakpoints(16)
    sched = strong_schedule(16, 1.0)
    start, end = bp.points[1] + 1, bp.points[2]
    q = np.zeros(end - start + 1)
    q[-1] = 1.0
    kd = C.compute_kappa(q, 1, bp, sched)
    ref, Gamma = naive_kappa(q, 1, bp, sched.alpha)
    assert kd.kappa.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(kd.kappa[:end - start + 1], [ref[t] for t in range(start, end + 1)],
                       rtol=1e-12, atol=1e-15)
    # all mass arrives at the last point of the phase
    assert kd.kappa[end - start] == pytest.approx(1.0)


def test_kappa_uniform_T8_weak():
    bp = compute_breakpoints(8)
    sched = weak_schedule(8, 1.0)
    start, end = bp.points[1] + 1, bp.points[2]
    q = np.full(end - start + 1, 1 / (end - start + 1))
    kd = C.compute_kappa(q, 1, bp, sched)
    assert kd.kappa.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(kd.kappa >= 0)
    assert np.all(kd.kappa[end - start + 1:] == 0)


@settings(max_examples=200)
@given(st.integers(8, 3000), st.data())
def test_kappa_invariants(T, data):
    bp = compute_breakpoints(T)
    i = data.draw(st.integers(0, bp.k - 1))
    start = bp.quarter_start if i == 0 else bp.points[i] + 1
    end = bp.points[i + 1]
    seed = data.draw(st.integers(0, 2 ** 32 - 1))
    q = np.random.default_rng(seed).dirichlet(np.full(end - start + 1, 0.5))
    sched = data.draw(st.sampled_from([weak_schedule(T, 0.7), strong_schedule(T, 2.0)]))
    kd = C.compute_kappa(q, i, bp, sched)
    assert abs(kd.kappa.sum() - 1) <= 1e-9
    assert np.all(kd.kappa >= 0)
    assert np.all(kd.kappa[end - start + 1:] == 0)
    # sigma(t) = Gamma(T_{i+1}) / Gamma(t) * sum_{s <= t} q(s)
    g = kd.Gamma[1:]
    assert np.allclose(kd.sigma, kd.Gamma[-1] / g * np.cumsum(q), rtol=1e-9, atol=1e-12)


def test_kappa_errors():
    bp = compute_breakpoints(16)
    sched = strong_schedule(16, 1.0)
    with pytest.raises(RangeError):
        C.compute_kappa(np.ones(3) / 3, 1, bp, sched)
    with pytest.raises(RangeError):
        C.compute_kappa(np.ones(1), bp.k, bp, sched)


def test_A_examples():
    T, G = 32, 5.0
    sched = weak_schedule(T, 0.4)
    F = np.full(T, 0.7)
    L = C.compute_L(10, 20).L
    a = sched.alpha[9:20]
    assert C.compute_A(F, 10, 10, 20, sched, G) == pytest.approx(-np.sum(L * a * a * G * G))
    assert C.compute_A(F, 20, 10, 20, sched, G) == pytest.approx(-L[-1] * a[-1] ** 2 * G * G)
    with pytest.raises(RangeError):
        C.compute_A(F, 9, 10, 20, sched, G)


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6), st.integers(2, 40))
def test_pA_matches_naive_sum(seed, width):
    rng = np.random.default_rng(seed)
    T = 64
    sched = strong_schedule(T, 1.0)
    t0 = int(rng.integers(1, T - width + 1))
    t1 = t0 + width - 1 if t0 + width - 1 > t0 else t0 + 1
    F = rng.random((3, T))
    p = rng.dirichlet(np.ones(t1 - t0 + 1))
    fast = C.p_dot_A(F, p, t0, t1, sched, 5.0)
    slow = sum(p[l - t0] * C.compute_A(F, l, t0, t1, sched, 5.0) for l in range(t0, t1 + 1))
    assert np.allclose(fast, slow, rtol=1e-10, atol=1e-13)


def test_deviation_stats_fields():
    T = 32
    F = np.linspace(1, 0, T)
    st_ = C.deviation_stats(F, 10, 8, 30, strong_schedule(T, 1.0), 5.0, 0.0)
    assert np.isfinite([st_.A, st_.A_star, st_.pA]).all()


def test_lookahead_zero_steps_is_tight():
    p = abs_quadratic_problem()
    res = C.check_lookahead(p, np.zeros(64), 32, 64, 50)
    assert res.lhs == 0 and res.rhs == 0 and res.passed


def test_lookahead_passes():
    p = abs_quadratic_problem()
    res = C.check_lookahead(p, strong_schedule(1024, 1.0), 512, 1024, 500)
    assert res.passed and res.slack > 0
    lasso = gen_lasso(10, 5, 12, 0.1, 0.2, seed=1)
    res = C.check_lookahead(lasso, weak_schedule(512, lasso.D / lasso.G), 256, 512, 3)
    assert res.slack == 0 and res.passed


def test_lookahead_range():
    with pytest.raises(RangeError):
        C.check_lookahead(abs_quadratic_problem(), strong_schedule(64, 1.0), 1, 64, 10)


def test_tail_check_and_its_precondition():
    p = abs_quadratic_problem()
    rep = C.check_tail(p, strong_schedule(512, 1.0), 256, 512, 2000)
    assert rep.passed and len(rep.results) == 6
    with pytest.raises(RangeError):
        C.check_tail(p, np.linspace(0.1, 0.2, 64), 32, 64, 10)


def test_tau_examples():
    T = 64
    bp = compute_breakpoints(T)
    taus = C.compute_tau(np.linspace(2, 1, T), bp)
    assert taus[-1] == T
    assert taus[:-1] == [bp.points[i + 1] for i in range(bp.k + 1)]
    flat = C.compute_tau(np.ones(T), bp)
    assert flat[0] == bp.quarter_start and flat[1] == bp.points[1] + 1


def test_transfer_report():
    p = abs_quadratic_problem()
    rep = C.check_transfer(p, standard_schedule("harmonic", 1024, lam=1.0), 200)
    k = compute_breakpoints(1024).k
    assert [r.check for r in rep.results].count("transfer") == k + 1
    assert rep.results[-1].check == "general_bound"
    assert rep.passed


def test_high_probability_rows():
    p = abs_quadratic_problem()
    rep = C.check_high_probability(p, standard_schedule("harmonic", 512, lam=1.0), 300,
                                   deltas=(0.5, 0.01))
    assert [r.params["q"] for r in rep.results] == ["uniform"] * 2 + ["point_T1"] * 2
    assert [r.rhs for r in rep.results[:2]] == [0.25, 0.005]
    assert rep.passed


def test_exact_suites_pass():
    assert C.check_breakpoints(list(range(4, 300))).passed
    assert C.check_weights(rs=(2, 10, 1000)).passed
    assert C.check_kappa(100, seed=3).passed


def test_report_csv(tmp_path):
    rep = C.CertificateReport()
    rep.add("demo", {"x": 1}, 1.0, 2.0, 0.5)
    rep.add("demo", {"x": 2}, 3.0, 2.0)
    path = tmp_path / "r.csv"
    rep.write_csv(path, {"suite": "demo"})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1] == "check,params,lhs,rhs,margin,pass"
    rows = list(csv.DictReader(lines[1:]))
    assert [r["pass"] for r in rows] == ["1", "0"]
    assert float(rows[0]["margin"]) == 1.5
    assert not rep.passed and len(rep.failures()) == 1
