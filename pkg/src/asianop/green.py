"""Fundamental solutions: the explicit Gaussian kernel of ``L_G`` and an
empirical transition density for the arithmetic operator ``L_A``."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError
from .operators import L_G, GroupElement, TestFunction, apply_operator, compose_G, inverse_G
from .rng import BLOCK_SIZE, block_generator, blocks, map_blocks

SQRT3 = np.sqrt(3.0)


def _kernel_at_origin(t, x1, x2):
    """Displayed kernel ``Gamma_G(t, x; 0, 0)``, valid for ``t < 0``."""
    y = x2 - t * x1
    q = x1**2 / t + 3.0 * x1 * y / t**2 + 3.0 * y**2 / t**3
    return SQRT3 / (2.0 * np.pi * t**2) * np.exp(q)


def gamma_G(z, Z) -> np.ndarray:
    """Transition density of ``L_G`` from start ``z=(t,x1,x2)`` to end ``Z=(T,X1,X2)``.

    Reduced to the pole by the group law, ``Gamma_G(Z^{-1} o z; 0, 0)``.
    Arguments broadcast, so grids of end points can be passed directly.
    """
    z = GroupElement(*z)
    Z = GroupElement(*Z)
    if np.any(np.asarray(z.t) >= np.asarray(Z.t)):
        raise DomainError("gamma_G needs start time t < end time T")
    w = compose_G(inverse_G(Z), z)
    return _kernel_at_origin(w.t, w.x1, w.x2)


def gamma_G_quadratic_form(t: float) -> np.ndarray:
    """Coefficient matrix of the exponent in ``(x1, x2 - t x1)``."""
    return np.array([[1.0 / t, 1.5 / t**2], [1.5 / t**2, 3.0 / t**3]])


def _forward_grid(z, tau: float, n: int, width: float):
    """Tensor grid covering the law at time ``tau`` of the ``L_G`` diffusion from ``z``.

    Under ``dX1 = sqrt(2) dW, dX2 = X1 dt`` the end point has mean
    ``(x1, x2 + h x1)`` and variances ``2h``, ``2h^3/3`` with ``h = tau - t``.
    """
    h = tau - z[0]
    if h <= 0:
        raise DomainError("grid time must follow the start time")
    m1, m2 = z[1], z[2] + h * z[1]
    s1, s2 = np.sqrt(2 * h), np.sqrt(2 * h**3 / 3)
    g1 = np.linspace(m1 - width * s1, m1 + width * s1, n)
    g2 = np.linspace(m2 - width * s2, m2 + width * s2, n)
    return g1, g2


def gamma_G_mass(z, T: float, n: int = 401, width: float = 9.0) -> float:
    """``int Gamma_G(z; T, X) dX`` by the trapezoid rule (spectrally accurate for Gaussians)."""
    g1, g2 = _forward_grid(z, T, n, width)
    dens = gamma_G(tuple(z), (T, g1[:, None], g2[None, :]))
    return float(trapezoid(trapezoid(dens, g2, axis=1), g1))


def gamma_G_chapman_kolmogorov(z, Z, tau: float, n: int = 401, width: float = 9.0):
    """``(direct, composed)``: ``Gamma_G(z; Z)`` and ``int Gamma_G(z; tau, y) Gamma_G(tau, y; Z) dy``."""
    if not z[0] < tau < Z[0]:
        raise DomainError("need t < tau < T")
    g1, g2 = _forward_grid(z, tau, n, width)
    Y1, Y2 = g1[:, None], g2[None, :]
    first = gamma_G(tuple(z), (tau, Y1, Y2))
    second = gamma_G((tau, Y1, Y2), tuple(Z))
    composed = trapezoid(trapezoid(first * second, g2, axis=1), g1)
    return float(gamma_G(tuple(z), tuple(Z))), float(composed)


def gamma_G_pde_residual(points, Z, step: float = 1e-3, margin: float = 0.5) -> float:
    """Max ``|L_G Gamma_G(., Z)|`` over start ``points`` by central differences.

    ``points`` is a tuple of arrays ``(t, x1, x2)``; every ``t`` must sit at
    least ``margin`` before the pole time.
    """
    t, x1, x2 = (np.asarray(p, dtype=float) for p in points)
    Z = GroupElement(*Z)
    if np.any(Z.t - t < margin):
        raise DomainError(f"points closer than margin={margin} to the pole time")
    u = TestFunction(lambda tt, a, b: gamma_G((tt, a, b), Z), step=step)
    return float(np.max(np.abs(apply_operator(L_G, u, (t, x1, x2)))))


# ---------------------------------------------------------------------------
# arithmetic transition density by simulation
# ---------------------------------------------------------------------------

def simulate_canonical_arithmetic(x_start: tuple[float, float], horizon: float, n_paths: int,
                                  seed: int, steps_per_unit: int = 512, stream: int = 0,
                                  threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """End points of ``dX1 = sqrt(2) X1 dW, dX2 = X1 dt`` after ``horizon``.

    ``X1`` uses its exact exponential form; ``X2`` is the trapezoid integral
    of ``X1`` on a uniform schedule.
    """
    x1, x2 = map(float, x_start)
    if x1 <= 0:
        raise DomainError("start x1 must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n_steps = max(1, int(np.ceil(steps_per_unit * horizon)))
    dt = horizon / n_steps
    times = dt * np.arange(1, n_steps + 1)

    def run(blk):
        b, lo, hi = blk
        rng = block_generator(seed, stream, b)
        z = rng.standard_normal((n_steps, hi - lo))
        w = np.cumsum(np.sqrt(dt) * z, axis=0)
        path = x1 * np.exp(np.sqrt(2.0) * w - times[:, None])
        integral = dt * (path.sum(axis=0) - 0.5 * path[-1] + 0.5 * x1)
        return path[-1], x2 + integral

    out = map_blocks(run, blocks(n_paths), threads)
    return np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out])


def silverman_bandwidth(samples: np.ndarray, factor: float = 1.0) -> float:
    """Per-axis rule ``factor * min(sd, IQR/1.349) * n^(-1/6)`` for a 2-d product kernel."""
    n = samples.size
    q75, q25 = np.quantile(samples, [0.75, 0.25])
    scale = min(np.std(samples), (q75 - q25) / 1.349)
    return factor * scale * n ** (-1.0 / 6.0)


def product_kde(x1: np.ndarray, x2: np.ndarray, grid1: np.ndarray, grid2: np.ndarray,
                bandwidth: tuple[float, float], chunk: int = 65536,
                reflect_x1: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Product-Gaussian KDE on the tensor grid and its pointwise standard error.

    ``reflect_x1`` mirrors every sample at ``x1 = 0`` so no kernel mass leaks
    out of the positive half-line.
    """
    h1, h2 = bandwidth
    if h1 <= 0 or h2 <= 0:
        raise ValueError("bandwidth must be positive")
    n = x1.size
    m1 = np.zeros((grid1.size, grid2.size))
    m2 = np.zeros_like(m1)
    c1 = 1.0 / (np.sqrt(2 * np.pi) * h1)
    c2 = 1.0 / (np.sqrt(2 * np.pi) * h2)
    for lo in range(0, n, chunk):
        k1 = c1 * np.exp(-0.5 * ((grid1[:, None] - x1[None, lo:lo + chunk]) / h1) ** 2)
        if reflect_x1:
            k1 += c1 * np.exp(-0.5 * ((grid1[:, None] + x1[None, lo:lo + chunk]) / h1) ** 2)
        k2 = c2 * np.exp(-0.5 * ((grid2[:, None] - x2[None, lo:lo + chunk]) / h2) ** 2)
        m1 += k1 @ k2.T
        m2 += (k1 * k1) @ (k2 * k2).T
    m1 /= n
    m2 /= n
    se = np.sqrt(np.maximum(m2 - m1**2, 0.0) / n)
    return m1, se


@dataclass
class DensityEstimate:
    x1: np.ndarray
    x2: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    bandwidth: tuple[float, float]
    n_paths: int
    seed: int
    horizon: float
    start: tuple[float, float]
    extra: dict = field(default_factory=dict)

    def mass(self) -> float:
        return float(trapezoid(trapezoid(self.density, self.x2, axis=1), self.x1))

    def marginal_mean_x1(self) -> float:
        return self.extra["x1_mean"]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["X1", "X2", "density"])
            for i, a in enumerate(self.x1):
                for j, b in enumerate(self.x2):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(self.density[i, j]))])
        return path


def _bw(bandwidth, s1, s2):
    if np.ndim(bandwidth) == 0:
        if bandwidth <= 0:
            raise ValueError("bandwidth factor must be positive")
        return silverman_bandwidth(s1, bandwidth), silverman_bandwidth(s2, bandwidth)
    h1, h2 = bandwidth
    if h1 <= 0 or h2 <= 0:
        raise ValueError("bandwidth must be positive")
    return float(h1), float(h2)


def estimate_gamma_A(x_start, horizon: float, n_paths: int, bandwidth=1.0, seed: int = 0,
                     n_grid: int = 96, steps_per_unit: int = 512, threads: int = 1) -> DensityEstimate:
    """Kernel estimate of the ``L_A`` transition density from ``x_start``.

    ``bandwidth`` is either a scalar multiplying the per-axis Silverman rule
    or an explicit pair ``(h1, h2)``.
    """
    x_start = (float(x_start[0]), float(x_start[1]))
    if x_start[0] <= 0 or x_start[1] <= 0:
        raise DomainError("start point must lie in the positive quadrant")
    if n_paths < 10_000:
        raise ValueError("need at least 1e4 paths")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if np.ndim(bandwidth) == 0 and bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    s1, s2 = simulate_canonical_arithmetic(x_start, horizon, n_paths, seed, steps_per_unit,
                                           threads=threads)
    h = _bw(bandwidth, s1, s2)
    lo1, hi1 = np.quantile(s1, [1e-4, 1 - 1e-4])
    lo2, hi2 = np.quantile(s2, [1e-4, 1 - 1e-4])
    g1 = np.linspace(max(lo1 - 4 * h[0], 0.0), hi1 + 4 * h[0], n_grid)
    g2 = np.linspace(lo2 - 4 * h[1], hi2 + 4 * h[1], n_grid)
    dens, se = product_kde(s1, s2, g1, g2, h, reflect_x1=True)
    extra = {"x1_mean": float(s1.mean()), "x1_mean_se": float(s1.std(ddof=1) / np.sqrt(s1.size)),
             "x2_min": float(s2.min())}
    return DensityEstimate(g1, g2, dens, se, h, n_paths, seed, horizon, x_start, extra)


@dataclass
class ScalingTrial:
    X1: float
    orientation: str
    discrepancy: float
    noise_floor: float
    peak_density: float

    @property
    def passed(self) -> bool:
        return self.discrepancy <= 3.0 * self.noise_floor


@dataclass
class ScalingReport:
    trials: list[ScalingTrial]
    resolved_orientation: Optional[str]
    x_start: tuple[float, float]
    horizon: float
    n_paths: int

    def trial(self, X1: float, orientation: str) -> ScalingTrial:
        return next(t for t in self.trials if t.X1 == X1 and t.orientation == orientation)

    @property
    def passed(self) -> bool:
        if self.resolved_orientation is None:
            return False
        return all(t.passed for t in self.trials if t.orientation == self.resolved_orientation)


ORIENTATIONS = ("x2-X2", "X2-x2")


def check_gamma_A_scaling(x_start=(1.5, 0.5), horizon: float = 0.5, X1_values=(1.0, 2.0),
                          n_paths: int = 1_000_000, seed: int = 2024, n_grid: int = 64,
                          bandwidth_factor: float = 1.0, steps_per_unit: int = 512,
                          simulate: Callable = simulate_canonical_arithmetic,
                          threads: int = 1) -> ScalingReport:
    """Empirical test of ``Gamma_A(t,x;T,X) = X1^-2 Gamma_A(t-T, x1/X1, (x2-X2)/X1; 0,1,0)``.

    For each end level ``X1 = c`` the left side is the density of the process
    started at ``x`` along the line ``{X1 = c}``. The right side comes from an
    independent simulation started at ``(x1/c, 0)``: the process is invariant
    under shifts of the second coordinate, so the kernel at start
    ``(x1/c, w)`` and end ``(1, 0)`` equals the kernel from ``(x1/c, 0)`` to
    ``(1, -w)``. The right-hand bandwidths are the left ones divided by
    ``c``, which makes both estimators share their smoothing bias exactly.
    Both sign conventions for the second argument are tried.
    """
    x1, x2 = map(float, x_start)
    l1, l2 = simulate(x_start, horizon, n_paths, seed, steps_per_unit, stream=0, threads=threads)
    h = (silverman_bandwidth(l1, bandwidth_factor), silverman_bandwidth(l2, bandwidth_factor))
    grid2 = np.linspace(*np.quantile(l2, [0.005, 0.995]), n_grid)

    trials = []
    for k, c in enumerate(X1_values):
        c = float(c)
        left, se_l = product_kde(l1, l2, np.array([c]), grid2, h)
        left, se_l = left[0], se_l[0]
        if left.max() < 10 * se_l.max():
            raise ValueError(f"insufficient support overlap at X1={c}")
        r1, r2 = simulate((x1 / c, 0.0), horizon, n_paths, seed, steps_per_unit,
                          stream=k + 1, threads=threads)
        hr = (h[0] / c, h[1] / c)
        for orient in ORIENTATIONS:
            w = (grid2 - x2) / c if orient == "x2-X2" else (x2 - grid2) / c
            right, se_r = product_kde(r1, r2, np.array([1.0]), w, hr)
            right, se_r = right[0] / c**2, se_r[0] / c**2
            noise = float(np.max(np.sqrt(se_l**2 + se_r**2)))
            trials.append(ScalingTrial(c, orient, float(np.max(np.abs(left - right))), noise,
                                       float(left.max())))

    resolved = None
    for orient in ORIENTATIONS:
        if all(t.passed for t in trials if t.orientation == orient):
            resolved = orient
            break
    return ScalingReport(trials, resolved, (x1, x2), horizon, n_paths)


def gamma_A_scaling_mass(x_start=(1.5, 0.5), horizon: float = 0.5, n_levels: int = 48,
                         n_paths: int = 50_000, seed: int = 7, bandwidth_factor: float = 1.0,
                         n_grid: int = 128, steps_per_unit: int = 512, threads: int = 1) -> float:
    """Integral over the end point ``X`` of the right-hand side of the scaling identity.

    Each end level ``X1`` needs its own simulation from ``(x1/X1, 0)``; the
    result should be one up to truncation and quadrature error.
    """
    x1, x2 = map(float, x_start)
    p1, p2 = simulate_canonical_arithmetic(x_start, horizon, n_paths, seed, steps_per_unit,
                                           threads=threads)
    h = (silverman_bandwidth(p1, bandwidth_factor), silverman_bandwidth(p2, bandwidth_factor))
    lo, hi = np.quantile(p1, [1e-4, 1 - 1e-4])
    # X1 is lognormal: log-spaced levels resolve the mode and the long right tail
    levels = np.geomspace(max(lo - 4 * h[0], lo / 4), hi + 4 * h[0], n_levels)
    spread = np.quantile(p2, 1 - 1e-4) - x2
    grid2 = x2 + np.linspace(-4 * h[1], spread + 4 * h[1], n_grid)
    rows = []
    for k, c in enumerate(levels):
        r1, r2 = simulate_canonical_arithmetic((x1 / c, 0.0), horizon, n_paths, seed,
                                               steps_per_unit, stream=100 + k, threads=threads)
        dens, _ = product_kde(r1, r2, np.array([1.0]), (grid2 - x2) / c, (h[0] / c, h[1] / c))
        rows.append(dens[0] / c**2)
    rhs = np.array(rows)
    return float(trapezoid(trapezoid(rhs, grid2, axis=1), levels))
