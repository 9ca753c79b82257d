"""Model parameters, Asian payoffs and the explicit super-solution barrier."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import CalibrationError, DomainError, HypothesisError


class Averaging(str, enum.Enum):
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"

    def f(self, s):
        """Integrand of the averaging process, ``dA = f(S) dt``."""
        if self is Averaging.ARITHMETIC:
            return s
        return np.log(s)


class PayoffKind(str, enum.Enum):
    FIXED = "fixed"
    FLOATING = "floating"


@dataclass(frozen=True)
class ModelParams:
    sigma: float
    r: float
    T: float
    averaging: Averaging = Averaging.ARITHMETIC
    sigma_floor: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "averaging", Averaging(self.averaging))
        if not self.T > 0:
            raise ValueError(f"maturity T must be positive, got {self.T}")
        if self.r < 0:
            raise ValueError(f"risk-free rate must be nonnegative, got {self.r}")
        if self.sigma < 0:
            raise ValueError(f"volatility must be nonnegative, got {self.sigma}")
        if not self.sigma_floor > 0:
            raise ValueError("sigma_floor must be positive")

    def check_hypotheses(self) -> None:
        """Raise HypothesisError unless (H1) holds: sigma >= sigma_floor > 0."""
        if not (np.isfinite(self.sigma) and self.sigma >= self.sigma_floor):
            raise HypothesisError(
                f"(H1) violated: sigma={self.sigma} must be bounded and >= sigma_floor={self.sigma_floor} > 0"
            )

    def with_sigma(self, sigma: float) -> "ModelParams":
        return replace(self, sigma=sigma)


@dataclass(frozen=True)
class PayoffSpec:
    kind: PayoffKind = PayoffKind.FIXED
    strike: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.kind is PayoffKind.FIXED and not self.strike > 0:
            raise ValueError(f"fixed-strike payoff needs a positive strike, got {self.strike}")

    def __call__(self, t, s, a):
        """Vectorised payoff ``(a/t - K)^+`` or ``(a/t - s)^+``."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("payoff is singular at t <= 0")
        avg = np.asarray(a, dtype=float) / t
        if self.kind is PayoffKind.FIXED:
            return np.maximum(avg - self.strike, 0.0)
        return np.maximum(avg - np.asarray(s, dtype=float), 0.0)

    def ds(self, t, s, a):
        """Derivative in s (one-sided choice 0 at the kink)."""
        if self.kind is PayoffKind.FIXED:
            return np.zeros(np.broadcast(t, s, a).shape)
        return -(np.asarray(a) / np.asarray(t) > np.asarray(s)).astype(float)


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point ``z = (t, x1, x2)``; for the option problem ``x1 = s`` and ``x2 = a``."""

    t: float
    x1: float
    x2: float

    @property
    def s(self):
        return self.x1

    @property
    def a(self):
        return self.x2

    def check_positive(self) -> "SpaceTimePoint":
        if np.any(np.asarray(self.x1) <= 0) or np.any(np.asarray(self.x2) <= 0):
            raise DomainError(f"point {self} must have x1 > 0 and x2 > 0")
        return self


@dataclass(frozen=True)
class SuperSolutionParams:
    alpha: float
    beta: float

    def __call__(self, t, s, a):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("super-solution is singular at t <= 0")
        radius = np.hypot(s, a)
        return self.alpha / t * (1.0 + np.exp(-self.beta * t) * radius)


def payoff_eval(spec: PayoffSpec, z: SpaceTimePoint) -> float:
    return spec(z.t, z.s, z.a)


def supersolution_eval(p: SuperSolutionParams, z: SpaceTimePoint) -> float:
    return p(z.t, z.s, z.a)


def supersolution_partials(p: SuperSolutionParams, t, s, a):
    """Closed-form ``(u, u_t, u_s, u_ss, u_a)`` of the super-solution."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("super-solution is singular at t <= 0")
    R = np.hypot(s, a)
    decay = np.exp(-p.beta * t)
    amp = p.alpha / t * decay
    u = p.alpha / t * (1.0 + decay * R)
    u_t = -p.alpha / t**2 - amp * R * (p.beta + 1.0 / t)
    u_s = amp * s / R
    u_ss = amp * a**2 / R**3
    u_a = amp * a / R
    return u, u_t, u_s, u_ss, u_a


def _residual_arrays(m: ModelParams, p: SuperSolutionParams, t, s, a):
    u, u_t, u_s, u_ss, u_a = supersolution_partials(p, t, s, a)
    return 0.5 * m.sigma**2 * s**2 * u_ss + m.r * s * u_s + s * u_a + u_t - m.r * u


def supersolution_residual(m: ModelParams, p: SuperSolutionParams, z: SpaceTimePoint):
    """Arithmetic pricing operator applied to the super-solution, from exact partials."""
    if m.averaging is not Averaging.ARITHMETIC:
        raise ValueError("the explicit super-solution is defined for arithmetic averaging")
    z.check_positive()
    return _residual_arrays(m, p, z.t, z.s, z.a)


@dataclass(frozen=True)
class CalibrationLadder:
    beta_start: float = 1.0
    beta_max: float = 1024.0
    alpha_start: float = 1e-3
    alpha_ratio: float = 2 ** 0.125
    alpha_max: float = 1e8

    def betas(self):
        b = self.beta_start
        while b <= self.beta_max and b > 0:
            yield b
            b *= 2.0


def sample_grid(s_range, a_range, T, n_s=50, n_a=50, n_t=20):
    """Tensor sample on ``[s0,s1] x [a0,a1] x (0,T]`` with ``t_k = kT/n_t``."""
    s = np.linspace(*s_range, n_s)
    a = np.linspace(*a_range, n_a)
    t = T * np.arange(1, n_t + 1) / n_t
    tt, ss, aa = np.meshgrid(t, s, a, indexing="ij")
    return SpaceTimePoint(tt.ravel(), ss.ravel(), aa.ravel())


def _as_arrays(sample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(sample, SpaceTimePoint):
        t, s, a = sample.t, sample.s, sample.a
    else:
        pts = list(sample)
        t = [z.t for z in pts]
        s = [z.s for z in pts]
        a = [z.a for z in pts]
    return (np.atleast_1d(np.asarray(t, float)), np.atleast_1d(np.asarray(s, float)),
            np.atleast_1d(np.asarray(a, float)))


def calibrate_supersolution(m: ModelParams, spec: PayoffSpec,
                            sample: SpaceTimePoint | Iterable[SpaceTimePoint],
                            ladder: CalibrationLadder = CalibrationLadder()) -> SuperSolutionParams:
    """Find ``(alpha, beta)`` with ``u_bar >= payoff`` and ``L u_bar <= 0`` on ``sample``.

    The residual is linear in alpha, so its sign is decided by beta alone; beta
    walks a doubling ladder and alpha is then the smallest ladder value that
    dominates the payoff.
    """
    t, s, a = _as_arrays(sample)
    if t.size == 0:
        raise ValueError("calibration sample is empty")
    if np.any(t <= 0) or np.any(s <= 0) or np.any(a <= 0):
        raise DomainError("calibration sample must lie in t > 0, s > 0, a > 0")
    phi = spec(t, s, a)
    alphas = ladder.alpha_start * ladder.alpha_ratio ** np.arange(
        int(np.ceil(np.log(ladder.alpha_max / ladder.alpha_start) / np.log(ladder.alpha_ratio))) + 1)

    worst = None
    for beta in ladder.betas():
        unit = SuperSolutionParams(1.0, beta)
        res = _residual_arrays(m, unit, t, s, a)
        if np.max(res) > 0:
            k = int(np.argmax(res))
            worst = SpaceTimePoint(t[k], s[k], a[k])
            continue
        need = np.max(phi / unit(t, s, a))
        ok = alphas >= need
        if not ok.any():
            k = int(np.argmax(phi / unit(t, s, a)))
            worst = SpaceTimePoint(t[k], s[k], a[k])
            continue
        p = SuperSolutionParams(float(alphas[np.argmax(ok)]), beta)
        verify_supersolution(m, spec, p, SpaceTimePoint(t, s, a))
        return p
    raise CalibrationError("no super-solution parameters found on the configured ladders",
                           worst_point=worst)


def verify_supersolution(m: ModelParams, spec: PayoffSpec, p: SuperSolutionParams,
                         sample) -> dict:
    """Independent re-check of dominance and the residual sign on a sample."""
    t, s, a = _as_arrays(sample)
    gap = p(t, s, a) - spec(t, s, a)
    res = _residual_arrays(m, p, t, s, a)
    report = {"min_dominance_gap": float(gap.min()), "max_residual": float(res.max()),
              "n_points": int(t.size)}
    if gap.min() < 0 or res.max() > 0:
        bad = int(np.argmin(gap)) if gap.min() < 0 else int(np.argmax(res))
        raise CalibrationError(f"super-solution check failed: {report}",
                               worst_point=SpaceTimePoint(t[bad], s[bad], a[bad]))
    return report
