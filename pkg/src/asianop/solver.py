"""Finite-difference solver for the Asian obstacle problem on truncated domains.

The pricing operator is discretised in ``(t, x = log s, a)``:

* central second difference for the diffusion ``sigma^2/2 u_xx``,
* central first difference for the drift ``(r - sigma^2/2) u_x``, switched to
  upwind when the cell Peclet number would break monotonicity,
* a one-sided difference for the transport ``f(s) u_a`` taken on the side the
  characteristic comes from (``a + da`` for ``f > 0``),
* reaction ``-r u``.

Each backward step of the theta-scheme is a linear complementarity problem,
solved by projected SOR (default) or by a penalty iteration.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import spsolve

from .domains import BlendBoundary, DomainSpec, Grid, build_grid, lentil_corners
from .errors import ConvergenceError, DomainError
from .model import ModelParams, PayoffSpec, SuperSolutionParams


class ResolutionWarning(UserWarning):
    """The a-transport moves more than one cell per time step."""


class Method(str, enum.Enum):
    PSOR = "psor"
    PENALTY = "penalty"


class Transport(str, enum.Enum):
    """Discretisation of ``f(s) u_a``: plain upwind, or upwind plus a limited
    second-order correction taken from the later time level."""

    UPWIND = "upwind"
    LIMITED = "limited"


@dataclass(frozen=True)
class SchemeOptions:
    method: Method = Method.PSOR
    theta: float = 1.0
    omega: float = 1.5
    tol: float = 1e-8
    max_iter: int = 10_000
    rho: float = 1e6
    exercise_tol: float = 1e-8
    transport: Transport = Transport.UPWIND

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "transport", Transport(self.transport))
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0.5, 1]")
        if not 0 < self.omega < 2:
            raise ValueError("relaxation omega must lie in (0, 2)")
        if self.tol <= 0 or self.rho <= 0 or self.exercise_tol <= 0:
            raise ValueError("tolerances and penalty must be positive")


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------

@dataclass
class Stencil:
    """Spatial operator ``A`` on the flattened grid: ``(A u)_n = cd_n u_n + sum_k c_nk u_{nb_nk}``."""

    order: np.ndarray   # interior nodes in sweep order
    nb: np.ndarray      # (N, 3) neighbour indices, -1 for none
    coef: np.ndarray    # (N, 3)
    diag: np.ndarray    # (N,)
    matrix: sp.csr_matrix
    upwinded_drift: bool
    courant_factor: float  # max |f(s)| / da


def build_stencil(m: ModelParams, grid: Grid) -> Stencil:
    n_a, n_s = grid.shape
    N = n_a * n_s
    c = 0.5 * m.sigma**2
    b = m.r - c
    dx, da = grid.dx, grid.da
    upwind = abs(b) * dx > 2 * c
    if upwind:
        cw = c / dx**2 + max(-b, 0.0) / dx
        ce = c / dx**2 + max(b, 0.0) / dx
    else:
        cw = c / dx**2 - b / (2 * dx)
        ce = c / dx**2 + b / (2 * dx)
    f = grid.averaging.f(grid.s)

    J, I = np.nonzero(grid.interior)
    idx = J * n_s + I
    nb = -np.ones((N, 3), dtype=np.int64)
    coef = np.zeros((N, 3))
    diag = np.zeros(N)
    fi = f[I]
    nb[idx, 0] = idx - 1
    nb[idx, 1] = idx + 1
    nb[idx, 2] = np.where(fi > 0, idx + n_s, np.where(fi < 0, idx - n_s, -1))
    coef[idx, 0] = cw
    coef[idx, 1] = ce
    coef[idx, 2] = np.abs(fi) / da
    diag[idx] = -(cw + ce + np.abs(fi) / da + m.r)

    # sweep from large a downwards, s ascending
    order = idx[np.lexsort((I, -J))]
    rows = np.concatenate([idx, np.repeat(idx, 3)])
    cols = np.concatenate([idx, nb[idx].ravel()])
    vals = np.concatenate([diag[idx], coef[idx].ravel()])
    keep = cols >= 0
    A = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N, N))
    return Stencil(order.astype(np.int64), nb, coef, diag, A, upwind,
                   float(np.max(np.abs(f[grid.mask.any(axis=0)]))) / da)


def _van_leer(p, q):
    """Harmonic-mean limiter; NaN where either difference is missing."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(p * q > 0, 2.0 * p * q / (p + q), 0.0)
    return np.where(np.isfinite(p) & np.isfinite(q), out, np.nan)


def transport_correction(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Limited anti-diffusive part of ``f(s) u_a`` on an ``(n_a, n_s)`` slice.

    Adding it to the one-sided difference gives the MUSCL flux with the
    van Leer limiter, second order where ``u`` is smooth in ``a`` and
    reverting to upwind at kinks and next to the edge of the mask, where a
    slope cannot be formed. Zero outside the interior.
    """
    f = grid.averaging.f(grid.s)[None, :]
    v = np.where(grid.mask, u, np.nan)
    d = np.full((v.shape[0] + 1, v.shape[1]), np.nan)
    d[1:-1] = v[1:] - v[:-1]                     # d[j] = u_j - u_{j-1}
    slope = _van_leer(d[1:], d[:-1])             # limited slope at node j
    corr = np.zeros_like(v)
    # f > 0: interfaces j +- 1/2 are reconstructed from nodes j + 1 and j
    corr[:-1] = np.where(f > 0, -(slope[1:] - slope[:-1]), 0.0)
    # f < 0: reconstructed from nodes j and j - 1
    corr[1:] += np.where(f < 0, slope[1:] - slope[:-1], 0.0)
    corr *= np.abs(f) / (2.0 * grid.da) * np.sign(f)
    return np.where(grid.interior, np.nan_to_num(corr), 0.0)


@numba.njit(cache=True)
def _complementarity_residual(u, rhs, phi, order, nb, moff, mdiag, dt):
    worst = 0.0
    for n in order:
        acc = mdiag[n] * u[n] - rhs[n]
        for k in range(3):
            q = nb[n, k]
            if q >= 0:
                acc += moff[n, k] * u[q]
        v = min(acc / dt, u[n] - phi[n])
        if abs(v) > worst:
            worst = abs(v)
    return worst


_PATIENCE = 200


@numba.njit(cache=True)
def _psor(u, rhs, phi, order, nb, moff, mdiag, omega, tol, max_iter, dt, patience):
    """Returns (sweeps, residual); sweeps is -1 on exhaustion, -2 on stagnation."""
    res = _complementarity_residual(u, rhs, phi, order, nb, moff, mdiag, dt)
    if res <= tol:
        return 0, res
    best = res
    since = 0
    for it in range(max_iter):
        for n in order:
            acc = rhs[n]
            for k in range(3):
                q = nb[n, k]
                if q >= 0:
                    acc -= moff[n, k] * u[q]
            y = u[n] + omega * (acc / mdiag[n] - u[n])
            u[n] = y if y > phi[n] else phi[n]
        res = _complementarity_residual(u, rhs, phi, order, nb, moff, mdiag, dt)
        if res <= tol:
            return it + 1, res
        if res < 0.9 * best:
            best = res
            since = 0
        else:
            since += 1
            if since >= patience:
                return -2, res
    return -1, res


def _penalty_step(u, rhs, phi, interior, boundary_rows, M, rho_dt, max_iter=100):
    N = u.size
    active = interior & (u < phi)
    eye_b = sp.diags(boundary_rows.astype(float))
    for it in range(max_iter):
        P = sp.diags((active & interior).astype(float) * rho_dt)
        mat = (M + P + eye_b).tocsc()
        b = np.where(boundary_rows, u, rhs + rho_dt * active * phi)
        new = spsolve(mat, b)
        new_active = interior & (new < phi)
        u[:] = np.where(interior | boundary_rows, new, u)
        if np.array_equal(new_active, active):
            return it + 1
        active = new_active
    return -1


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

@dataclass
class SolutionField:
    """Grid samples ``u[k, j, i]`` at ``(t_k, a_j, s_i)``; NaN off the domain mask."""

    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    u: np.ndarray
    payoff: np.ndarray
    mask: np.ndarray
    boundary: np.ndarray
    exercised: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return np.log(self.s)

    def slice_scale(self) -> np.ndarray:
        """Payoff scale per time slice, ``max(1, max payoff)``."""
        ph = np.where(self.mask[None], self.payoff, 0.0)
        return np.maximum(1.0, ph.reshape(ph.shape[0], -1).max(axis=1))

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.t - t)))
        if not np.isclose(self.t[k], t, rtol=0, atol=1e-12 * max(1.0, abs(t))):
            raise DomainError(f"t={t} is not a grid time")
        return k

    def interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator((self.t, self.a, self.x), self.u, method="linear",
                                       bounds_error=False, fill_value=np.nan)

    def value_at(self, t, s, a) -> np.ndarray:
        """Trilinear in ``(t, a, log s)``: bilinear in space, linear in time."""
        t, s, a = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float),
                                      np.asarray(a, float))
        if np.any(s <= 0):
            raise DomainError("probe needs s > 0")
        pts = np.stack([t.ravel(), a.ravel(), np.log(s).ravel()], axis=-1)
        vals = self.interpolator()(pts).reshape(t.shape)
        if np.any(~np.isfinite(vals)):
            bad = np.flatnonzero(~np.isfinite(vals.ravel()))[0]
            raise DomainError(f"probe (t={t.ravel()[bad]}, s={s.ravel()[bad]}, a={a.ravel()[bad]}) "
                              "lies outside the solved domain")
        return vals

    def to_csv(self, path, slices="all") -> Path:
        """Rows ``(t, s, a, u, payoff, exercised)``; t outer, a middle, s inner.

        ``slices`` is ``"all"``, ``"earliest"`` (the ``t = epsilon`` slice) or
        a sequence of time indices.
        """
        path = Path(path)
        if isinstance(slices, str):
            if slices == "all":
                ks = range(self.t.size)
            elif slices == "earliest":
                ks = [0]
            else:
                raise ValueError(f"unknown slice selection {slices!r}")
        else:
            ks = [int(k) for k in slices]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "s", "a", "u", "payoff", "exercised"])
            for k in ks:
                tk = self.t[k]
                for j, aj in enumerate(self.a):
                    for i, si in enumerate(self.s):
                        if not self.mask[j, i]:
                            continue
                        w.writerow([repr(float(tk)), repr(float(si)), repr(float(aj)),
                                    repr(float(self.u[k, j, i])), repr(float(self.payoff[k, j, i])),
                                    int(self.exercised[k, j, i])])
        return path


def read_field_csv(path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.asarray(data[name]) for name in data.dtype.names}


def exercise_mask(u, payoff, mask, scale, tol):
    """Nodes with positive payoff where ``u - payoff <= tol * scale`` (ties count)."""
    sc = np.asarray(scale).reshape((-1,) + (1,) * (u.ndim - 1))
    return mask & (payoff > 0) & (u - payoff <= tol * sc)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def solve_obstacle(m: ModelParams, spec: PayoffSpec, domain: DomainSpec, grid: Grid,
                   opts: SchemeOptions, boundary) -> SolutionField:
    """March the obstacle problem backward from ``T`` to ``epsilon``.

    ``boundary`` supplies ``lateral(t, s, a)`` and ``terminal(s, a)``.
    """
    m.check_hypotheses()
    if grid.domain != domain:
        raise ValueError("grid was built for a different domain")
    n_a, n_s = grid.shape
    N = n_a * n_s
    st = build_stencil(m, grid)
    S, A = np.meshgrid(grid.s, grid.a)
    S, A = S.ravel(), A.ravel()
    mask = grid.mask.ravel()
    bnd = grid.boundary.ravel()
    interior = grid.interior.ravel()
    times = grid.t
    n_t = times.size - 1

    courant = st.courant_factor * (times[1] - times[0])
    if courant > 1.0:
        warnings.warn(f"a-transport under-resolved: max|f(s)| dt / da = {courant:.3g} > 1",
                      ResolutionWarning, stacklevel=2)

    u_all = np.full((n_t + 1, n_a, n_s), np.nan)
    ph_all = np.full((n_t + 1, n_a, n_s), np.nan)
    u = np.zeros(N)
    phi_T = np.where(mask, spec(times[-1], S, A), 0.0)
    u[mask] = boundary.terminal(S[mask], A[mask])
    u_all[-1] = np.where(grid.mask, u.reshape(n_a, n_s), np.nan)
    ph_all[-1] = np.where(grid.mask, phi_T.reshape(n_a, n_s), np.nan)

    iters = []
    residuals = []
    fallbacks = 0
    for k in range(n_t - 1, -1, -1):
        tk = times[k]
        dt = times[k + 1] - tk
        phi = np.where(mask, spec(tk, S, A), 0.0)
        scale = max(1.0, float(phi[mask].max()))
        rhs = u.copy()
        if opts.theta < 1.0:
            rhs += (1.0 - opts.theta) * dt * (st.matrix @ u)
        if opts.transport is Transport.LIMITED:
            rhs += dt * transport_correction(u.reshape(n_a, n_s), grid).ravel()
        moff = -opts.theta * dt * st.coef
        mdiag = 1.0 - opts.theta * dt * st.diag
        u_new = np.maximum(u, phi)
        u_new[bnd] = boundary.lateral(tk, S[bnd], A[bnd])
        if opts.method is Method.PSOR:
            start = u_new.copy()
            it, res = _psor(u_new, rhs, phi, st.order, st.nb, moff, mdiag, opts.omega,
                            opts.tol * scale, opts.max_iter, dt, _PATIENCE)
            if it == -2:
                # over-relaxation can cycle on the one-sided transport; plain
                # Gauss-Seidel is monotone for this M-matrix
                fallbacks += 1
                u_new[:] = start
                it, res = _psor(u_new, rhs, phi, st.order, st.nb, moff, mdiag, 1.0,
                                opts.tol * scale, opts.max_iter, dt, opts.max_iter)
            if it < 0:
                raise ConvergenceError(f"PSOR did not converge at t={tk:.6g} "
                                       f"(residual {res:.3e} after {opts.max_iter} sweeps)")
        else:
            M = sp.diags(interior.astype(float)) - opts.theta * dt * sp.diags(
                interior.astype(float)) @ st.matrix
            it = _penalty_step(u_new, rhs, phi, interior, bnd | ~mask, M.tocsr(), opts.rho * dt)
            if it < 0:
                raise ConvergenceError(f"penalty iteration did not settle at t={tk:.6g}")
            res = _complementarity_residual(u_new, rhs, phi, st.order, st.nb, moff, mdiag, dt)
        iters.append(it)
        residuals.append(res / scale)
        u = u_new
        u_all[k] = np.where(grid.mask, u.reshape(n_a, n_s), np.nan)
        ph_all[k] = np.where(grid.mask, phi.reshape(n_a, n_s), np.nan)

    field_ = SolutionField(times.copy(), grid.s.copy(), grid.a.copy(), u_all, ph_all,
                           grid.mask.copy(), grid.boundary.copy(),
                           np.zeros_like(u_all, dtype=bool))
    field_.exercised = exercise_mask(u_all, ph_all, grid.mask[None], field_.slice_scale(),
                                     opts.exercise_tol)
    field_.meta = {
        "method": opts.method.value, "theta": opts.theta, "omega": opts.omega, "tol": opts.tol,
        "transport": opts.transport.value,
        "rho": opts.rho if opts.method is Method.PENALTY else None,
        "n_s": n_s - 1, "n_a": n_a - 1, "n_t": n_t, "dx": grid.dx, "da": grid.da,
        "dt": float(times[1] - times[0]), "courant": courant,
        "upwinded_drift": st.upwinded_drift,
        "omega_fallbacks": fallbacks, "iterations": iters[::-1], "max_iterations": int(max(iters)) if iters else 0,
        "complementarity_residual": float(max(residuals)) if residuals else 0.0,
        "domain": domain.kind.value, "averaging": grid.averaging.value,
    }
    return field_


def complementarity_residual(m: ModelParams, grid: Grid, field_: SolutionField,
                             theta: float = 1.0,
                             transport: Transport = Transport.UPWIND) -> float:
    """Recompute ``max |min(-L_h u, u - phi)| / scale`` over interior nodes of all steps."""
    st = build_stencil(m, grid)
    worst = 0.0
    sc = field_.slice_scale()
    for k in range(field_.t.size - 1):
        dt = field_.t[k + 1] - field_.t[k]
        up = np.nan_to_num(field_.u[k + 1].ravel())
        uk = np.nan_to_num(field_.u[k].ravel())
        ph = np.nan_to_num(field_.payoff[k].ravel())
        rhs = up + (1.0 - theta) * dt * (st.matrix @ up) if theta < 1 else up
        if Transport(transport) is Transport.LIMITED:
            rhs = rhs + dt * transport_correction(field_.u[k + 1], grid).ravel()
        r = _complementarity_residual(uk, rhs, ph, st.order, st.nb, -theta * dt * st.coef,
                                      1.0 - theta * dt * st.diag, dt)
        worst = max(worst, r / sc[k])
    return worst


def solve_rectangle(m: ModelParams, spec: PayoffSpec, ubar: SuperSolutionParams,
                    domain: DomainSpec, n_s: int, n_a: int, n_t: int,
                    opts: SchemeOptions = SchemeOptions(), boundary=None) -> tuple[SolutionField, Grid]:
    grid = build_grid(domain, n_s, n_a, n_t, m.averaging)
    if boundary is None:
        boundary = BlendBoundary(spec, ubar, domain)
    return solve_obstacle(m, spec, domain, grid, opts, boundary), grid


# ---------------------------------------------------------------------------
# lentil sequence
# ---------------------------------------------------------------------------

@dataclass
class SequenceReport:
    n_list: list[int]
    fields: list[SolutionField]
    compact: tuple
    scale: float
    min_increments: list[float]       # min_K (u_{n+1} - u_n)
    max_increments: list[float]       # max_K (u_{n+1} - u_n)
    sup_increments: list[float]       # sup_K |u_{n+1} - u_n|
    min_above_payoff: list[float]     # min_K (u_n - phi)
    max_above_barrier: list[float]    # max_K (u_n - u_bar)
    tol_mono: float

    @property
    def monotone_increasing(self) -> bool:
        return all(d >= -self.tol_mono * self.scale for d in self.min_increments)

    @property
    def monotone_decreasing(self) -> bool:
        return all(d <= self.tol_mono * self.scale for d in self.max_increments)

    @property
    def cauchy_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.sup_increments, self.sup_increments[1:]))

    @property
    def bounded(self) -> bool:
        tol = self.tol_mono * self.scale
        return (all(v >= -tol for v in self.min_above_payoff)
                and all(v <= tol for v in self.max_above_barrier))


def compact_nodes(field_: SolutionField, compact) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    (s0, s1), (a0, a1), (t0, t1) = compact
    kt = np.flatnonzero((field_.t >= t0 - 1e-12) & (field_.t <= t1 + 1e-12))
    js = np.flatnonzero((field_.a >= a0) & (field_.a <= a1))
    is_ = np.flatnonzero((field_.s >= s0) & (field_.s <= s1))
    return kt, js, is_


def domain_sequence_solve(m: ModelParams, spec: PayoffSpec, p: SuperSolutionParams,
                          n_list: Sequence[int], n_s: int = 128, n_a: int = 96, n_t: int = 128,
                          opts: SchemeOptions = SchemeOptions(),
                          compact=((0.8, 1.2), (0.8, 1.2), (0.5, 1.0)),
                          tol_mono: float = 1e-3, epsilon: Optional[float] = None) -> SequenceReport:
    """Solve on ``Lentil(n)`` for each ``n`` with blended data ``g_n`` on a shared grid.

    ``compact`` is ``((s0, s1), (a0, a1), (t0/T, t1/T))``, time given as a
    fraction of the maturity, and must sit inside ``Lentil(min(n) - 1)``.
    """
    n_list = sorted(int(n) for n in n_list)
    if n_list[0] < 2:
        raise ValueError("the blend needs n >= 2")
    T = m.T
    (s0, s1), (a0, a1), (f0, f1) = compact
    compact_abs = ((s0, s1), (a0, a1), (f0 * T, f1 * T))
    inner = DomainSpec.lentil(n_list[0] - 1, T, epsilon)
    corners = [(s0, a0), (s0, a1), (s1, a0), (s1, a1)]
    if not all(inner.contains(s, a) for s, a in corners):
        raise DomainError("compact set is not inside Lentil(min n - 1)")
    lo, hi = lentil_corners(n_list[-1])
    box = (lo, hi, lo, hi)

    fields = []
    for n in n_list:
        dom = DomainSpec.lentil(n, T, epsilon)
        grid = build_grid(dom, n_s, n_a, n_t, m.averaging, box=box)
        bd = BlendBoundary(spec, p, dom, blend_terminal=True)
        fields.append(solve_obstacle(m, spec, dom, grid, opts, bd))

    kt, js, is_ = compact_nodes(fields[0], compact_abs)
    sel = np.ix_(kt, js, is_)
    t = fields[0].t[kt][:, None, None]
    Sg = fields[0].s[is_][None, None, :]
    Ag = fields[0].a[js][None, :, None]
    phi = spec(t, Sg, Ag)
    ub = p(t, Sg, Ag)
    scale = max(1.0, float(phi.max()))
    vals = [f.u[sel] for f in fields]
    if any(np.isnan(v).any() for v in vals):
        raise DomainError("compact set leaves a solved domain")
    rep = SequenceReport(
        n_list, fields, compact_abs, scale,
        [float((b - a).min()) for a, b in zip(vals, vals[1:])],
        [float((b - a).max()) for a, b in zip(vals, vals[1:])],
        [float(np.abs(b - a).max()) for a, b in zip(vals, vals[1:])],
        [float((v - phi).min()) for v in vals],
        [float((v - ub).max()) for v in vals],
        tol_mono,
    )
    if not rep.monotone_increasing:
        warnings.warn("lentil sequence is not nondecreasing on the compact set beyond tolerance",
                      RuntimeWarning, stacklevel=2)
    return rep
