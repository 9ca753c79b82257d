"""Monte Carlo for the (S, A) diffusion: path simulation, least-squares
optimal stopping, and European and deterministic reference prices.

Every random number comes from the block streams in :mod:`asianop.rng`, so
prices depend on ``(seed, schedule, N)`` and never on the thread count.
Stream 0 feeds the regression batch, stream 1 the out-of-sample policy
re-evaluation and stream 2 the European estimator.
"""

from __future__ import annotations

import csv
import gzip
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConfigError, DomainError, NumericalError
from .model import Averaging, ModelParams, PayoffSpec, SpaceTimePoint
from .rng import block_generator, blocks, map_blocks, normals

MIN_PATHS = 1000
STREAM_FIT, STREAM_POLICY, STREAM_EUROPEAN = 0, 1, 2


class RankWarning(UserWarning):
    """Some regression columns were dropped because the design was rank deficient."""


@dataclass
class PathBatch:
    """Paths on the schedule ``t[0] = t, ..., t[M] = T``; arrays are ``(M + 1, N)``."""

    t: np.ndarray
    S: np.ndarray
    A: np.ndarray
    seed: int
    stream: int = STREAM_FIT
    antithetic: bool = False

    @property
    def n_paths(self) -> int:
        return self.S.shape[1]

    @property
    def n_steps(self) -> int:
        return self.t.size - 1

    def to_csv(self, path) -> Path:
        """Gzip-compressed long table ``path_id, t, S, A``."""
        path = Path(path)
        with gzip.open(path, "wt", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "t", "S", "A"])
            for p in range(self.n_paths):
                for k, tk in enumerate(self.t):
                    w.writerow([p, repr(float(tk)), repr(float(self.S[k, p])),
                                repr(float(self.A[k, p]))])
        return path


def schedule(start: SpaceTimePoint, T: float, M: int) -> np.ndarray:
    if M < 1:
        raise ConfigError("schedule needs at least one step")
    if not 0 < start.t < T:
        raise DomainError(f"start time {start.t} must lie in (0, T={T})")
    return np.linspace(start.t, T, M + 1)


def _check_start(start: SpaceTimePoint) -> SpaceTimePoint:
    if not (start.s > 0 and start.a > 0):
        raise DomainError(f"start point needs s > 0 and a > 0, got s={start.s}, a={start.a}")
    return start


def _step_block(m: ModelParams, start: SpaceTimePoint, t: np.ndarray, seed: int,
                stream: int, block: int, width: int, antithetic: bool):
    """Simulate one block of ``width`` paths; returns ``(S, A)`` of shape ``(M + 1, width)``."""
    rng = block_generator(seed, stream, block)
    dt = np.diff(t)
    z = normals(rng, (dt.size, width), antithetic)
    drift = (m.r - 0.5 * m.sigma**2) * dt
    vol = m.sigma * np.sqrt(dt)
    logS = np.log(start.s) + np.concatenate(
        [np.zeros((1, width)), np.cumsum(drift[:, None] + vol[:, None] * z, axis=0)])
    S = np.exp(logS)
    fS = m.averaging.f(S)
    incr = 0.5 * dt[:, None] * (fS[:-1] + fS[1:])
    A = start.a + np.concatenate([np.zeros((1, width)), np.cumsum(incr, axis=0)])
    if m.averaging is Averaging.ARITHMETIC and not np.all(np.diff(A, axis=0) > 0):
        raise NumericalError("running average failed to increase along a path")
    return S, A


def simulate_paths(m: ModelParams, start: SpaceTimePoint, M: int, N: int, seed: int,
                   stream: int = STREAM_FIT, antithetic: bool = False,
                   threads: int = 1) -> PathBatch:
    """Exact lognormal steps for S and the trapezoid rule for ``A = int f(S)``."""
    if N < MIN_PATHS:
        raise ConfigError(f"need at least {MIN_PATHS} paths, got {N}")
    _check_start(start)
    t = schedule(start, m.T, M)
    parts = map_blocks(
        lambda b: _step_block(m, start, t, seed, stream, b[0], b[2] - b[1], antithetic),
        blocks(N), threads)
    S = np.concatenate([p[0] for p in parts], axis=1)
    A = np.concatenate([p[1] for p in parts], axis=1)
    return PathBatch(t, S, A, seed, stream, antithetic)


# ---------------------------------------------------------------------------
# regression basis
# ---------------------------------------------------------------------------

def basis_exponents(degree: int) -> list[tuple[int, int]]:
    """Monomials ``x^i y^j`` with ``i + j <= degree``, ordered by total degree."""
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


def _design(x: np.ndarray, y: np.ndarray, exps) -> np.ndarray:
    return np.stack([x**i * y**j for i, j in exps], axis=1)


@dataclass
class _Fit:
    """Continuation regression at one time step, applied to standardised features."""

    mean: np.ndarray
    scale: np.ndarray
    exps: list
    coef: np.ndarray

    def __call__(self, S, avg):
        x = (S - self.mean[0]) / self.scale[0]
        y = (avg - self.mean[1]) / self.scale[1]
        return _design(x, y, self.exps) @ self.coef


def _fit_step(S, avg, target, exps, rcond=1e-10):
    """Least squares via column-pivoted QR, dropping numerically dependent columns."""
    mean = np.array([S.mean(), avg.mean()])
    scale = np.array([S.std(), avg.std()])
    scale = np.where(scale > 0, scale, 1.0)
    X = _design((S - mean[0]) / scale[0], (avg - mean[1]) / scale[1], exps)
    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rcond * diag[0])) if diag.size and diag[0] > 0 else 0
    kept = sorted(piv[:rank])
    if rank == 0:
        return _Fit(mean, scale, [(0, 0)], np.array([float(target.mean())])), len(exps)
    if rank < len(exps):
        X = X[:, kept]
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    return _Fit(mean, scale, [exps[i] for i in kept], coef), len(exps) - rank


# ---------------------------------------------------------------------------
# pricing
# ---------------------------------------------------------------------------

class MCEstimate(NamedTuple):
    price: float
    stderr: float


@dataclass
class StoppingEstimate:
    """Out-of-sample (policy re-evaluation) price of the American option.

    ``in_sample`` is the backward-induction value on the regression batch,
    kept as a diagnostic only. ``exercise_fraction[k]`` is the share of
    re-evaluation paths stopped at ``t[k]``.
    """

    price: float
    stderr: float
    in_sample: float
    t: np.ndarray
    exercise_fraction: np.ndarray
    basis: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"price": self.price, "stderr": self.stderr, "in_sample": self.in_sample,
                "basis": self.basis}


def lsmc_price(m: ModelParams, spec: PayoffSpec, start: SpaceTimePoint, M: int, N: int,
               degree: int = 2, seed: int = 0, antithetic: bool = False, threads: int = 1,
               n_policy: int | None = None) -> StoppingEstimate:
    """Least-squares Monte Carlo on the schedule ``t = t_0 < ... < t_M = T``.

    Continuation values are regressed on a total-degree polynomial in
    ``(S, A/t)`` over in-the-money paths. The fitted exercise rule is then
    run on an independent batch of ``n_policy`` paths (default ``N``); that
    estimate is the reported, low-biased price.
    """
    if degree < 2:
        raise ConfigError("basis degree must be at least 2")
    batch = simulate_paths(m, start, M, N, seed, STREAM_FIT, antithetic, threads)
    t = batch.t
    disc = np.exp(-m.r * np.diff(t))
    exps = basis_exponents(degree)

    value = spec(t[-1], batch.S[-1], batch.A[-1])
    fits: list[_Fit | None] = [None] * (M + 1)
    dropped = 0
    for k in range(M - 1, 0, -1):
        value *= disc[k]
        S, avg = batch.S[k], batch.A[k] / t[k]
        pay = spec(t[k], batch.S[k], batch.A[k])
        itm = pay > 0
        if itm.sum() <= len(exps):
            continue
        fit, lost = _fit_step(S[itm], avg[itm], value[itm], exps)
        dropped += lost > 0
        fits[k] = fit
        ex = itm.copy()
        ex[itm] = pay[itm] >= fit(S[itm], avg[itm])
        value = np.where(ex, pay, value)
    value *= disc[0]
    cont0 = float(value.mean())
    pay0 = float(spec(t[0], start.s, start.a))
    in_sample = max(pay0, cont0)
    del batch
    if dropped:
        warnings.warn(f"rank-deficient regression at {dropped} time steps; basis truncated",
                      RankWarning, stacklevel=2)

    exercise_now = pay0 > 0 and pay0 >= cont0
    n_policy = N if n_policy is None else n_policy
    if n_policy < MIN_PATHS:
        raise ConfigError(f"need at least {MIN_PATHS} re-evaluation paths, got {n_policy}")

    def run(block):
        b, lo, hi = block
        S, A = _step_block(m, start, t, seed, STREAM_POLICY, b, hi - lo, antithetic)
        width = hi - lo
        stop = np.full(width, M)
        alive = np.ones(width, bool)
        for k in range(1, M):
            fit = fits[k]
            if fit is None:
                continue
            pay = spec(t[k], S[k], A[k])
            cand = alive & (pay > 0)
            if not cand.any():
                continue
            ex = np.zeros(width, bool)
            ex[cand] = pay[cand] >= fit(S[k, cand], A[k, cand] / t[k])
            stop[ex] = k
            alive &= ~ex
        pay = spec(t[stop], S[stop, np.arange(width)], A[stop, np.arange(width)])
        return np.exp(-m.r * (t[stop] - t[0])) * pay, np.bincount(stop, minlength=M + 1)

    if exercise_now:
        cash = np.full(n_policy, pay0)
        counts = np.zeros(M + 1, int)
        counts[0] = n_policy
    else:
        parts = map_blocks(run, blocks(n_policy), threads)
        cash = np.concatenate([p[0] for p in parts])
        counts = np.sum([p[1] for p in parts], axis=0)
    price, se = _mean_se(cash, antithetic)
    return StoppingEstimate(price, se, in_sample, t, counts / n_policy,
                            {"kind": "polynomial", "variables": ["S", "A/t"], "degree": degree,
                             "terms": len(exps), "steps_truncated": int(dropped)})


def _mean_se(x: np.ndarray, antithetic: bool) -> tuple[float, float]:
    """Sample mean and its standard error; antithetic pairs are averaged first."""
    if antithetic:
        # path i pairs with i + half inside its block; an odd block leaves one single
        pairs = []
        for _, lo, hi in blocks(x.size):
            seg = x[lo:hi]
            half = (seg.size + 1) // 2
            n = seg.size - half
            pairs.append(0.5 * (seg[:n] + seg[half:]))
            pairs.append(seg[n:half])
        x = np.concatenate(pairs)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def european_price_mc(m: ModelParams, spec: PayoffSpec, start: SpaceTimePoint, M: int, N: int,
                      seed: int = 0, antithetic: bool = False, threads: int = 1) -> MCEstimate:
    """Discounted ``E[phi(T, S_T, A_T)]``; exercise only at maturity."""
    if N < MIN_PATHS:
        raise ConfigError(f"need at least {MIN_PATHS} paths, got {N}")
    _check_start(start)
    t = schedule(start, m.T, M)

    def run(block):
        b, lo, hi = block
        S, A = _step_block(m, start, t, seed, STREAM_EUROPEAN, b, hi - lo, antithetic)
        return spec(t[-1], S[-1], A[-1])

    pay = np.concatenate(map_blocks(run, blocks(N), threads))
    price, se = _mean_se(np.exp(-m.r * (t[-1] - t[0])) * pay, antithetic)
    return MCEstimate(price, se)


def deterministic_path(m: ModelParams, start: SpaceTimePoint, M: int):
    """The sigma = 0 path on the schedule: exact S, trapezoid A."""
    t = schedule(start, m.T, M)
    S = start.s * np.exp(m.r * (t - t[0]))
    fS = m.averaging.f(S)
    A = start.a + np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (fS[:-1] + fS[1:]))])
    return t, S, A


def deterministic_oracle_price(m: ModelParams, spec: PayoffSpec, start: SpaceTimePoint,
                               M: int) -> float:
    """With no noise every stopping time is deterministic: scan the schedule."""
    if m.sigma != 0:
        raise ConfigError(f"deterministic oracle needs sigma = 0, got {m.sigma}")
    _check_start(start)
    t, S, A = deterministic_path(m, start, M)
    return float(np.max(np.exp(-m.r * (t - t[0])) * spec(t, S, A)))


def schedule_sensitivity(m, spec, start, M_values, N, degree=2, seed=0, threads=1):
    """LSMC prices for several schedule sizes; the discrete-exercise gap shows up as drift in M."""
    return {int(M): lsmc_price(m, spec, start, int(M), N, degree, seed, threads=threads)
            for M in M_values}


__all__ = [
    "PathBatch", "StoppingEstimate", "MCEstimate", "RankWarning", "simulate_paths",
    "lsmc_price", "european_price_mc", "deterministic_oracle_price", "deterministic_path",
    "basis_exponents", "schedule", "schedule_sensitivity",
]
