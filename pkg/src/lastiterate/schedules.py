"""Horizon-aware step-size schedules.

The horizon ``T`` is split into dyadic-tail phases ``(T_i, T_{i+1}]`` with
``T_i = T - ceil(T / 2**i)``.  A base schedule ``gamma`` is modified by
halving it once per phase, ``alpha_t = 2**-i * gamma_t``.  Iterations are
1-indexed throughout; arrays store ``alpha_t`` at position ``t - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (
    HorizonTooSmallError,
    NonPositiveParameterError,
    NotDecreasingError,
    UnknownFamilyError,
)

MIN_HORIZON = 4

STANDARD_FAMILIES = ("constant", "inv_sqrt_t", "harmonic")
MODIFIED_FAMILIES = ("weak_modified", "strong_modified")
FAMILIES = STANDARD_FAMILIES + MODIFIED_FAMILIES + ("custom",)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Breakpoints:
    """Phase boundaries ``0 = T_0 < T_1 < ... < T_k = T-1 < T_{k+1} = T``."""

    T: int
    k: int
    points: tuple

    def phase_of(self, t: int) -> int:
        """Index ``i`` of the phase ``(T_i, T_{i+1}]`` containing ``t``."""
        if not 1 <= t <= self.T:
            raise ValueError(f"t={t} outside 1..{self.T}")
        # bisect on the half-open intervals
        lo, hi = 0, self.k
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.points[mid] < t:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def phases(self) -> np.ndarray:
        """Phase index for each ``t = 1..T`` as an int array of length T."""
        lengths = np.diff(self.points)
        return np.repeat(np.arange(self.k + 1), lengths)

    def phase_range(self, i: int) -> range:
        """The iterations ``T_i + 1 .. T_{i+1}`` (1-indexed) of phase ``i``."""
        return range(self.points[i] + 1, self.points[i + 1] + 1)

    @property
    def quarter_start(self) -> int:
        """``ceil(T/4)``, the left end of the window used for phase 0."""
        return -(-self.T // 4)


@dataclass(frozen=True)
class StepSchedule:
    T: int
    alpha: np.ndarray
    family: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    phase: np.ndarray | None = None

    def __post_init__(self):
        alpha = _frozen(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if alpha.ndim != 1 or alpha.shape[0] != self.T:
            raise ValueError(f"alpha must have length T={self.T}, got {alpha.shape}")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise NonPositiveParameterError("step sizes must be finite and > 0")
        if self.family not in FAMILIES:
            raise UnknownFamilyError(self.family)
        if self.phase is not None:
            ph = np.asarray(self.phase, dtype=int).copy()
            ph.setflags(write=False)
            object.__setattr__(self, "phase", ph)
        object.__setattr__(self, "params", dict(self.params))

    def __len__(self):
        return self.T

    def __getitem__(self, t: int) -> float:
        """``alpha_t`` with 1-based ``t``."""
        if not 1 <= t <= self.T:
            raise IndexError(t)
        return float(self.alpha[t - 1])

    @property
    def is_modified(self) -> bool:
        return self.phase is not None

    def phases(self) -> np.ndarray:
        if self.phase is None:
            return np.full(self.T, -1, dtype=int)
        return self.phase

    @classmethod
    def from_array(cls, values: Sequence[float], family: str = "custom", **params):
        values = np.asarray(values, dtype=float)
        return cls(T=len(values), alpha=values, family=family, params=params)


@dataclass(frozen=True)
class DecayProfile:
    beta: float
    is_decreasing: bool


def _check_horizon(T) -> int:
    if isinstance(T, bool) or int(T) != T:
        raise HorizonTooSmallError(f"horizon must be an integer, got {T!r}")
    T = int(T)
    if T < MIN_HORIZON:
        raise HorizonTooSmallError(f"horizon T={T} < {MIN_HORIZON}")
    return T


def _positive(name, value) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise NonPositiveParameterError(f"{name} must be finite and > 0, got {value}")
    return value


def compute_breakpoints(T: int) -> Breakpoints:
    T = _check_horizon(T)
    # smallest i with T <= 2**i
    k = (T - 1).bit_length()
    points = [T - ((T + (1 << i) - 1) >> i) for i in range(k + 1)]
    points.append(T)
    return Breakpoints(T=T, k=k, points=tuple(points))


def standard_schedule(family: str, T: int, *, C: float | None = None,
                      lam: float | None = None) -> StepSchedule:
    """Unmodified baselines: ``C/sqrt(T)``, ``C/sqrt(t)`` or ``1/(lam t)``."""
    if family not in STANDARD_FAMILIES:
        raise UnknownFamilyError(
            f"unknown standard family {family!r}; expected one of {STANDARD_FAMILIES}")
    if T < 1:
        raise HorizonTooSmallError(f"horizon T={T} < 1")
    t = np.arange(1, T + 1, dtype=float)
    if family == "harmonic":
        lam = _positive("lambda", lam)
        return StepSchedule(T, 1.0 / (lam * t), "harmonic", {"lambda": lam})
    C = _positive("C", C)
    if family == "constant":
        alpha = np.full(T, C / math.sqrt(T))
    else:
        alpha = C / np.sqrt(t)
    return StepSchedule(T, alpha, family, {"C": C})


def modify_schedule(gamma, T: int | None = None) -> StepSchedule:
    """Halve a nonincreasing base schedule once per dyadic-tail phase.

    ``gamma`` may be a :class:`StepSchedule` or any 1-D sequence of length
    at least ``T``; only the first ``T`` entries are used.
    """
    base_family = gamma.family if isinstance(gamma, StepSchedule) else "custom"
    params = dict(gamma.params) if isinstance(gamma, StepSchedule) else {}
    values = np.asarray(gamma.alpha if isinstance(gamma, StepSchedule) else gamma,
                        dtype=float)
    if T is None:
        T = len(values)
    bp = compute_breakpoints(T)
    if len(values) < T:
        raise ValueError(f"base schedule has {len(values)} entries, need {T}")
    values = values[:T]
    if np.any(np.diff(values) > 0):
        first = int(np.argmax(np.diff(values) > 0)) + 1
        raise NotDecreasingError(
            f"base schedule increases at t={first} -> {first + 1}")
    phase = bp.phases()
    alpha = np.ldexp(values, -phase)
    family = {"constant": "weak_modified", "harmonic": "strong_modified"}.get(
        base_family, "custom")
    return StepSchedule(T, alpha, family, params, phase=phase)


def weak_schedule(T: int, C: float) -> StepSchedule:
    """``alpha_t = C 2^-i / sqrt(T)`` on phase ``i``."""
    T = _check_horizon(T)
    return modify_schedule(standard_schedule("constant", T, C=C), T)


def strong_schedule(T: int, lam: float) -> StepSchedule:
    """``alpha_t = 2^-i / (lam t)`` on phase ``i``."""
    T = _check_horizon(T)
    return modify_schedule(standard_schedule("harmonic", T, lam=lam), T)


def make_schedule(family: str, T: int, *, C: float | None = None,
                  lam: float | None = None) -> StepSchedule:
    """Build any named family; used by the CLI and the harness."""
    if family == "weak_modified":
        return weak_schedule(T, C)
    if family == "strong_modified":
        return strong_schedule(T, lam)
    return standard_schedule(family, T, C=C, lam=lam)


def estimate_decay_constant(gamma) -> DecayProfile:
    values = np.asarray(gamma.alpha if isinstance(gamma, StepSchedule) else gamma,
                        dtype=float)
    if len(values) < 2:
        raise ValueError("need at least two step sizes")
    T = len(values)
    t = np.arange(1, T // 2 + 1)
    ratios = values[2 * t - 1] / values[t - 1]
    beta = float(np.clip(ratios.min(), np.finfo(float).tiny, 1.0))
    return DecayProfile(beta=beta, is_decreasing=bool(np.all(np.diff(values) <= 0)))
