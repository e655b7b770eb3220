import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lastiterate import (
    abs_quadratic_problem,
    gen_lasso,
    gen_svm,
    make_problem,
    project_l2_ball,
    pure_quadratic_problem,
    reference_optimum,
)
from lastiterate.exceptions import InvalidProblemError
from lastiterate.problems import (
    lasso_problem,
    load_problem,
    rescale_problem,
    rescale_steps,
    save_problem,
    svm_problem,
)
from lastiterate.sgd import simulate

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def test_projection_examples():
    assert np.allclose(project_l2_ball(np.array([3.0, 4.0]), 5.0), [3, 4])
    assert np.allclose(project_l2_ball(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])


@given(arrays(float, st.integers(1, 6), elements=finite), st.floats(0.1, 100.0))
def test_projection_idempotent_and_feasible(x, R):
    p = project_l2_ball(x, R)
    assert np.linalg.norm(p) <= R * (1 + 1e-12)
    assert np.allclose(project_l2_ball(p, R), p)


def test_lasso_default_config_builds():
    p = make_problem("lasso")
    assert p.dim == 100 and p.data["A"].shape == (80, 100)
    assert np.count_nonzero(p.data["x_true"]) == 60
    assert set(np.unique(p.data["x_true"][p.data["x_true"] != 0])) <= {-1.0, 1.0}
    assert not p.is_stochastic


def test_lasso_zero_residual_at_truth():
    a, x_true, reg = 1.7, 0.8, 1.0
    p = lasso_problem(np.array([[a]]), np.array([a * x_true]), reg, radius=5.0)
    assert p.objective(np.array([x_true])) == pytest.approx(reg * abs(x_true))


def test_lasso_l1_subgradient_is_zero_at_origin():
    p = gen_lasso(5, 3, 7, 0.1, 0.3, seed=2)
    A, b = p.data["A"], p.data["b"]
    assert np.allclose(p.oracle(np.zeros(5)), (2 / 7) * A.T @ (-b))


def test_lasso_generation_is_seeded():
    a, b = gen_lasso(10, 4, 12, 0.1, 0.2, seed=9), gen_lasso(10, 4, 12, 0.1, 0.2, seed=9)
    assert np.array_equal(a.data["A"], b.data["A"]) and np.array_equal(a.data["b"], b.data["b"])
    c = gen_lasso(10, 4, 12, 0.1, 0.2, seed=10)
    assert not np.array_equal(a.data["A"], c.data["A"])


@pytest.mark.parametrize("kw", [dict(d=5, s=6), dict(d=5, s=0), dict(d=0, s=1)])
def test_lasso_rejects_bad_shapes(kw):
    with pytest.raises(InvalidProblemError):
        gen_lasso(kw["d"], kw["s"], 10, 0.1, 0.2, seed=0)


def test_svm_default_config_builds():
    p = make_problem("svm")
    assert p.data["A"].shape == (500, 30)
    assert p.objective(np.zeros(30)) == pytest.approx(1.0)
    assert p.lam == pytest.approx(0.1)


def test_svm_inactive_hinge_gives_regulariser_gradient():
    A, b = np.array([[1.0, 2.0]]), np.array([1.0])
    p = svm_problem(A, b, reg=0.5)
    x = np.array([2.0, 1.0])          # margin 4 > 1
    g = p.oracle(x, draw=np.array([0]))
    assert np.allclose(g, 0.5 * x)


def test_svm_oracle_is_unbiased():
    p = gen_svm(4, 25, 2.0, 1.0, 0.1, seed=1)
    x = np.random.default_rng(0).standard_normal(4) * 0.3
    per_index = np.stack([p.oracle(x, draw=np.array([i])) for i in range(25)])
    assert np.allclose(per_index.mean(axis=0), p.subgradient(x))
    assert np.all(np.linalg.norm(per_index, axis=1) <= p.G + 1e-12)


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6))
def test_svm_objective_is_strongly_convex(seed):
    p = gen_svm(3, 20, 2.0, 1.0, 0.2, seed=seed % 7)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    th = rng.random()
    lhs = p.objective(th * x + (1 - th) * y)
    rhs = th * p.objective(x) + (1 - th) * p.objective(y) \
        - 0.5 * p.lam * th * (1 - th) * np.sum((x - y) ** 2)
    assert lhs <= rhs + 1e-10


def test_abs_quadratic_basics():
    p = abs_quadratic_problem()
    assert p.objective(np.array([0.5])) == pytest.approx(0.625)
    assert p.G == 5 and p.D == 2 and p.lam == 1
    eps = np.array([-1, 1], dtype=np.int8)
    xs = np.array([[0.3], [0.3]])
    g = p.oracle_fn(xs, eps)
    assert np.allclose(g.mean(axis=0), np.sign(0.3) + 0.3)


@given(st.floats(-1, 1), st.sampled_from([-1, 1]))
def test_abs_quadratic_oracle_bound(x, e):
    g = abs_quadratic_problem().oracle_fn(np.array([[x]]), np.array([e], dtype=np.int8))
    assert abs(g[0, 0]) <= 5


def test_pure_quadratic_basics():
    p = pure_quadratic_problem()
    assert p.objective(np.array([1.0])) == pytest.approx(0.5)
    g = p.oracle_fn(np.zeros((2, 1)), np.array([-1, 1], dtype=np.int8))
    assert sorted(g[:, 0]) == [-1, 1]


@given(st.floats(1.0, 50.0), st.sampled_from([-1, 1]))
def test_pure_quadratic_large_step_pins_to_boundary(gamma, e):
    p = pure_quadratic_problem()
    out = simulate(p, np.array([gamma, 0.0]), np.ones((1, 1)), np.array([[e]], dtype=np.int8))
    assert abs(out.final[0, 0]) == pytest.approx(1.0)


def test_reference_optimum_examples():
    assert reference_optimum(pure_quadratic_problem(), 1, x1=np.zeros(1)) == 0.0
    assert reference_optimum(abs_quadratic_problem(), 10 ** 5) <= 1e-3


def test_reference_optimum_matches_soft_threshold():
    # d = 1: minimiser of S_aa x^2 - 2 S_ab x + reg |x| is soft-thresholding
    rng = np.random.default_rng(5)
    a = rng.standard_normal((20, 1))
    b = 2 * a[:, 0] + 0.3 * rng.standard_normal(20)
    reg = 0.5
    p = lasso_problem(a, b, reg, radius=10.0)
    s_aa, s_ab = np.mean(a[:, 0] ** 2), np.mean(a[:, 0] * b)
    x_star = np.sign(s_ab) * max(abs(s_ab) - reg / 2, 0.0) / s_aa
    assert reference_optimum(p, 20000) == pytest.approx(p.objective(np.array([x_star])), abs=1e-6)


def test_rescaling_maps_constants_and_trajectories():
    # a 2-strongly convex quadratic with noise, Lipschitz 3 on its ball
    base = pure_quadratic_problem()
    G, mu = 3.0, 2.0
    p0 = rescale_problem(base, G=G, mu=mu)
    assert p0.G == 5 and p0.lam == 1
    shrink = 5 * mu / G
    x = np.array([[0.4]])
    assert p0.objective_fn(x * shrink) == pytest.approx(25 * mu / G ** 2 * base.objective_fn(x))
    # SGD on F with steps alpha matches SGD on F0 with steps mu alpha, up to scaling
    alpha = np.array([0.1, 0.05, 0.02, 0.0])
    draws = np.array([[1, -1, 1]], dtype=np.int8)
    a = simulate(base, alpha, np.array([[0.5]]), draws, record_iterates=True)
    b = simulate(p0, rescale_steps(alpha, mu), np.array([[0.5 * shrink]]), draws,
                 record_iterates=True)
    assert np.allclose(b.iterates, a.iterates * shrink)


def test_save_and_load_round_trip(tmp_path):
    for kind in ("lasso", "svm"):
        p = make_problem(kind, seed=4, **({"d": 6, "s": 3, "n": 9} if kind == "lasso"
                                          else {"d": 4, "n": 11}))
        path = tmp_path / f"{kind}.csv"
        save_problem(p, path)
        q = load_problem(path)
        assert q.kind == kind
        assert np.array_equal(q.data["A"], p.data["A"]) and np.array_equal(q.data["b"], p.data["b"])
        x = np.linspace(-0.5, 0.5, p.dim)
        assert q.objective(x) == p.objective(x)
        assert first_line(path).startswith("# {")


def first_line(path):
    with open(path) as fh:
        return fh.readline()


def test_unknown_kind():
    with pytest.raises(InvalidProblemError):
        make_problem("ridge")
