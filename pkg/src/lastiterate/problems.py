"""Convex test problems with exact objectives, subgradient oracles and projections.

Every callable on a :class:`ProblemInstance` is batched: points are arrays of
shape ``(m, dim)`` (a single point of shape ``(dim,)`` is also accepted by the
public wrappers).  Randomness never lives inside a problem.  Stochastic
problems expose ``sample_draws(rng, n)`` which pre-draws the oracle noise for
``n`` steps from a caller-owned generator, and ``oracle(x, draw)`` which is a
pure function of the point and the draw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import __version__
from .exceptions import InvalidProblemError

DrawFn = Callable[[np.random.Generator, int], np.ndarray]

# Budget used when ``f_star`` is requested but was never computed.
DEFAULT_REFERENCE_BUDGET = 20_000


def project_l2_ball(x, R: float):
    """Euclidean projection onto ``{x : ||x|| <= R}``; batched along axis 0."""
    if R <= 0:
        raise InvalidProblemError(f"radius must be > 0, got {R}")
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(norms > R, R / np.where(norms > 0, norms, 1.0), 1.0)
    return x * scale


def rademacher(rng: np.random.Generator, n: int) -> np.ndarray:
    return (rng.integers(0, 2, size=n, dtype=np.int8) * 2 - 1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A convex problem over an l2 ball of radius ``radius`` centred at 0.

    ``G`` bounds every stochastic subgradient on the ball, ``D = 2 * radius``
    bounds its diameter, and ``lam`` is a valid strong-convexity modulus
    (0 when none is claimed).
    """

    kind: str
    dim: int
    objective_fn: Callable[[np.ndarray], np.ndarray]
    subgradient_fn: Callable[[np.ndarray], np.ndarray]
    oracle_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    draw_fn: DrawFn | None
    radius: float
    G: float
    lam: float = 0.0
    x1: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    known_f_star: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        x1 = np.zeros(self.dim) if self.x1 is None else np.asarray(self.x1, float)
        if x1.shape != (self.dim,):
            raise InvalidProblemError(f"x1 has shape {x1.shape}, expected ({self.dim},)")
        object.__setattr__(self, "x1", project_l2_ball(x1, self.radius))

    @property
    def D(self) -> float:
        return 2.0 * self.radius

    @property
    def is_stochastic(self) -> bool:
        return self.draw_fn is not None

    def _batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        x = x.reshape(-1, self.dim) if single else x
        if x.shape[-1] != self.dim:
            raise InvalidProblemError(f"point has dimension {x.shape[-1]}, expected {self.dim}")
        return x, single

    def objective(self, x):
        X, single = self._batch(x)
        out = self.objective_fn(X)
        return float(out[0]) if single else out

    def subgradient(self, x):
        """Deterministic (full-batch) subgradient."""
        X, single = self._batch(x)
        out = self.subgradient_fn(X)
        return out[0] if single else out

    def oracle(self, x, draw=None):
        X, single = self._batch(x)
        if self.draw_fn is None:
            out = self.subgradient_fn(X)
        else:
            draw = np.broadcast_to(np.asarray(draw), (X.shape[0],))
            out = self.oracle_fn(X, draw)
        return out[0] if single else out

    def project(self, x):
        return project_l2_ball(x, self.radius)

    def sample_draws(self, rng: np.random.Generator, n: int):
        """Noise for ``n`` oracle calls, or ``None`` for deterministic problems."""
        if self.draw_fn is None:
            return None
        return self.draw_fn(rng, n)

    def full_batch(self) -> "ProblemInstance":
        """Same problem with the exact subgradient as oracle (plain GD)."""
        return replace(self, draw_fn=None, params={**self.params, "full_batch": True},
                       _cache=self._cache)

    @property
    def f_star(self) -> float:
        if self.known_f_star is not None:
            return self.known_f_star
        if "f_star" not in self._cache:
            self._cache["f_star"] = reference_optimum(self, DEFAULT_REFERENCE_BUDGET)
        return self._cache["f_star"]

    def set_reference(self, value: float) -> None:
        """Store a precomputed reference optimum (e.g. from a larger budget)."""
        self._cache["f_star"] = float(value)

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params, "radius": self.radius}


# ---------------------------------------------------------------- Lasso

def lasso_problem(A, b, reg: float, radius: float, x_true=None, **params) -> ProblemInstance:
    """``F(x) = mean((A x - b)^2) + reg ||x||_1`` over the ball of radius ``radius``.

    The oracle is the full-batch subgradient, with ``sign(0) = 0`` for the
    l1 term.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = A.shape
    if b.shape != (n,):
        raise InvalidProblemError("b must have one entry per row of A")
    if reg <= 0:
        raise InvalidProblemError(f"reg must be > 0, got {reg}")

    def objective(X):
        resid = X @ A.T - b
        return np.mean(resid * resid, axis=1) + reg * np.abs(X).sum(axis=1)

    def subgradient(X):
        resid = X @ A.T - b
        return (2.0 / n) * (resid @ A) + reg * np.sign(X)

    smax = float(np.linalg.norm(A, 2))
    G = (2.0 / n) * smax * (smax * radius + float(np.linalg.norm(b))) + reg * math.sqrt(d)
    # the quadratic part is (2/n) lambda_min(A^T A)-strongly convex
    lam_min = float(np.linalg.eigvalsh(A.T @ A)[0]) if n >= d else 0.0
    lam = 2.0 * lam_min / n if lam_min > 1e-10 * smax ** 2 else 0.0
    data = {"A": A, "b": b}
    if x_true is not None:
        data["x_true"] = np.asarray(x_true, dtype=float)
    return ProblemInstance(
        kind="lasso", dim=d, objective_fn=objective, subgradient_fn=subgradient,
        oracle_fn=lambda X, draw: subgradient(X), draw_fn=None, radius=float(radius),
        G=G, lam=lam, params={"reg": reg, **params}, data=data)


def gen_lasso(d: int, s: int, n: int, sigma: float, reg: float, seed: int,
              radius: float | None = None) -> ProblemInstance:
    """Synthetic sparse regression.

    Draw order from ``numpy.random.default_rng(seed)``: ``A`` (n x d standard
    normal), support positions, support signs, noise ``z``.  ``x_true`` has
    ``s`` entries equal to +-1.  The default feasible radius is
    ``10 * ||x_true||``.
    """
    if not (isinstance(d, (int, np.integer)) and isinstance(n, (int, np.integer))) or d < 1 or n < 1:
        raise InvalidProblemError(f"invalid dimensions d={d}, n={n}")
    if not 0 < s <= d:
        raise InvalidProblemError(f"sparsity s={s} must satisfy 0 < s <= d={d}")
    if sigma < 0:
        raise InvalidProblemError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    support = rng.choice(d, size=s, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=s)
    x_true = np.zeros(d)
    x_true[support] = signs
    z = sigma * rng.standard_normal(n)
    b = A @ x_true + z
    if radius is None:
        radius = 10.0 * float(np.linalg.norm(x_true))
    return lasso_problem(A, b, reg, radius, x_true=x_true, d=d, s=s, n=n,
                         sigma=sigma, seed=seed)


# ---------------------------------------------------------------- SVM

def svm_problem(A, b, reg: float, radius: float = 10.0, **params) -> ProblemInstance:
    """``F(x) = mean(max(0, 1 - b_i <a_i, x>)) + reg/2 ||x||^2``.

    The stochastic oracle samples one index uniformly; the hinge contributes
    ``-b_i a_i`` only when ``1 - b_i <a_i, x> > 0``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n, d = A.shape
    if b.shape != (n,) or not np.all(np.isin(b, (-1.0, 1.0))):
        raise InvalidProblemError("labels must be a length-n vector of +-1")
    if reg <= 0:
        raise InvalidProblemError(f"reg must be > 0, got {reg}")
    bA = b[:, None] * A

    def objective(X):
        hinge = np.maximum(0.0, 1.0 - X @ bA.T)
        return hinge.mean(axis=1) + 0.5 * reg * np.sum(X * X, axis=1)

    def subgradient(X):
        active = (1.0 - X @ bA.T > 0).astype(float)
        return -(active @ bA) / n + reg * X

    def oracle(X, idx):
        rows = bA[idx]
        active = 1.0 - np.sum(rows * X, axis=1) > 0
        return -rows * active[:, None] + reg * X

    def draws(rng, m):
        return rng.integers(0, n, size=m, dtype=np.int32)

    G = float(np.max(np.linalg.norm(A, axis=1))) + reg * radius
    return ProblemInstance(
        kind="svm", dim=d, objective_fn=objective, subgradient_fn=subgradient,
        oracle_fn=oracle, draw_fn=draws, radius=float(radius), G=G, lam=float(reg),
        params={"reg": reg, **params}, data={"A": A, "b": b})


def gen_svm(d: int, n: int, sigma: float, eta: float, reg: float, seed: int,
            radius: float = 10.0) -> ProblemInstance:
    """Linear SVM data: ``a_i ~ N(0, sigma^2 I)``, ``b_i = sgn(a_i[0] + z_i)``.

    Draw order: ``A`` then ``z``.  A zero argument to ``sgn`` maps to +1.
    """
    if d < 1 or n < 1:
        raise InvalidProblemError(f"invalid dimensions d={d}, n={n}")
    if sigma <= 0 or eta < 0:
        raise InvalidProblemError("need sigma > 0 and eta >= 0")
    rng = np.random.default_rng(seed)
    A = sigma * rng.standard_normal((n, d))
    z = eta * rng.standard_normal(n)
    b = np.where(A[:, 0] + z >= 0, 1.0, -1.0)
    return svm_problem(A, b, reg, radius, d=d, n=n, sigma=sigma, eta=eta, seed=seed)


# ---------------------------------------------------------------- scalar adversarial problems

def abs_quadratic_problem() -> ProblemInstance:
    """``F(x) = |x| + x^2/2`` on ``[-1, 1]`` with oracle ``sgn(x) + x + 3 eps``."""
    return ProblemInstance(
        kind="absquad", dim=1,
        objective_fn=lambda X: np.abs(X[:, 0]) + 0.5 * X[:, 0] ** 2,
        subgradient_fn=lambda X: np.sign(X) + X,
        oracle_fn=lambda X, eps: np.sign(X) + X + 3.0 * eps[:, None],
        draw_fn=rademacher, radius=1.0, G=5.0, lam=1.0, x1=np.ones(1),
        known_f_star=0.0)


def pure_quadratic_problem() -> ProblemInstance:
    """``F(x) = x^2/2`` on ``[-1, 1]`` with oracle ``x + eps``."""
    return ProblemInstance(
        kind="quad", dim=1,
        objective_fn=lambda X: 0.5 * X[:, 0] ** 2,
        subgradient_fn=lambda X: X.copy(),
        oracle_fn=lambda X, eps: X + eps[:, None],
        draw_fn=rademacher, radius=1.0, G=2.0, lam=1.0, x1=np.ones(1),
        known_f_star=0.0)


def rescale_problem(problem: ProblemInstance, G: float | None = None,
                    mu: float | None = None) -> ProblemInstance:
    """Map a ``mu``-strongly convex, ``G``-Lipschitz problem to modulus 1, Lipschitz 5.

    ``F0(x) = (25 mu / G^2) F(G x / (5 mu))`` with oracle
    ``(5 / G) g(G x / (5 mu))``.  SGD on ``F`` with steps ``alpha`` from ``x``
    corresponds to SGD on ``F0`` with steps ``mu * alpha`` from
    ``5 mu x / G``; use :func:`rescale_steps` for the latter.
    """
    G = problem.G if G is None else float(G)
    mu = problem.lam if mu is None else float(mu)
    if G <= 0 or mu <= 0:
        raise InvalidProblemError("rescaling needs G > 0 and mu > 0")
    shrink = 5.0 * mu / G
    value_scale = 25.0 * mu / G ** 2

    def oracle(X, draw):
        return (5.0 / G) * problem.oracle_fn(X / shrink, draw)

    f_star = None if problem.known_f_star is None else value_scale * problem.known_f_star
    return ProblemInstance(
        kind=f"rescaled_{problem.kind}", dim=problem.dim,
        objective_fn=lambda X: value_scale * problem.objective_fn(X / shrink),
        subgradient_fn=lambda X: (5.0 / G) * problem.subgradient_fn(X / shrink),
        oracle_fn=oracle, draw_fn=problem.draw_fn, radius=problem.radius * shrink,
        G=5.0, lam=1.0, x1=problem.x1 * shrink,
        params={**problem.params, "rescale_G": G, "rescale_mu": mu},
        known_f_star=f_star)


def rescale_steps(alpha, mu: float):
    return mu * np.asarray(alpha, dtype=float)


# ---------------------------------------------------------------- reference optimum

def reference_optimum(problem: ProblemInstance, budget: int, x1=None) -> float:
    """Best objective seen by full-batch projected subgradient descent.

    Runs the modified schedule (strong if ``lam > 0`` else weak with
    ``C = D / G``) at every dyadic horizon below ``budget`` and at ``budget``
    itself, and returns the minimum value seen.  Hence the result never
    increases along dyadic budgets.
    """
    from .schedules import strong_schedule, weak_schedule
    from .sgd import simulate

    if budget < 1:
        raise ValueError("budget must be >= 1")
    det = problem.full_batch()
    start = det.x1 if x1 is None else det.project(np.asarray(x1, float))
    best = float(det.objective(start))
    horizons = [1 << j for j in range(2, max(budget, 4).bit_length()) if (1 << j) < budget]
    if budget >= 4:
        horizons.append(budget)
    for h in horizons:
        if det.lam > 0:
            sched = strong_schedule(h, det.lam)
        else:
            sched = weak_schedule(h, det.D / det.G)
        out = simulate(det, sched.alpha, start[None, :], None)
        best = min(best, float(out.objectives.min()))
    return best


# ---------------------------------------------------------------- construction from specs / files

def make_problem(kind: str, seed: int = 0, **params) -> ProblemInstance:
    """Construct a problem by name with the reference experiment defaults for omitted params."""
    if kind == "lasso":
        p = {"d": 100, "s": 60, "n": 80, "sigma": 0.1, "reg": 0.2, **params}
        radius = p.pop("radius", None)
        return gen_lasso(int(p["d"]), int(p["s"]), int(p["n"]), float(p["sigma"]),
                         float(p["reg"]), seed, radius=None if radius is None else float(radius))
    if kind == "svm":
        p = {"d": 30, "n": 500, "sigma": 5.0, "eta": 1.0, "reg": 0.1, "radius": 10.0, **params}
        return gen_svm(int(p["d"]), int(p["n"]), float(p["sigma"]), float(p["eta"]),
                       float(p["reg"]), seed, radius=float(p["radius"]))
    if params:
        raise InvalidProblemError(f"{kind} takes no parameters, got {sorted(params)}")
    if kind == "absquad":
        return abs_quadratic_problem()
    if kind == "quad":
        return pure_quadratic_problem()
    raise InvalidProblemError(f"unknown problem kind {kind!r}")


def save_problem(problem: ProblemInstance, path) -> None:
    """CSV with a one-line JSON comment header, then rows ``a_1..a_d,b``."""
    header = {"tool": f"lastiterate {__version__}", **problem.describe()}
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        if "A" in problem.data:
            A, b = problem.data["A"], problem.data["b"]
            for row, label in zip(A, b):
                fh.write(",".join(repr(float(v)) for v in row) + "," + repr(float(label)) + "\n")


def load_problem(path) -> ProblemInstance:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise InvalidProblemError(f"{path}: missing JSON header line")
        try:
            header = json.loads(first[2:])
        except json.JSONDecodeError as exc:
            raise InvalidProblemError(f"{path}: bad header: {exc}") from None
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    kind = header["kind"]
    if kind in ("absquad", "quad"):
        return make_problem(kind)
    A, b = rows[:, :-1], rows[:, -1]
    keep = {k: v for k, v in header.items() if k not in ("kind", "tool", "radius", "reg")}
    if kind == "lasso":
        return lasso_problem(A, b, header["reg"], header["radius"], **keep)
    if kind == "svm":
        return svm_problem(A, b, header["reg"], header["radius"], **keep)
    raise InvalidProblemError(f"{path}: unknown kind {kind!r}")
