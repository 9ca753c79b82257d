"""One-dimensional reduction of the floating-strike problem.

With ``u(t, s, a) = s v(t, y)`` and ``y = a / s`` the arithmetic pricing
operator factors as ``L u = s [v_t + (sigma^2/2) y^2 v_yy + (1 - r y) v_y]``
and the floating payoff becomes ``s (y/t - 1)^+``. The fixed strike
``(a/t - K)^+`` is not homogeneous of degree one in ``(s, a)``, so no such
reduction exists for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, UnsupportedReductionError
from .model import Averaging, ModelParams, PayoffKind, PayoffSpec
from .solver import SchemeOptions, _complementarity_residual, _psor


def reduced_obstacle(t, y):
    """``psi(t, y) = (y/t - 1)^+``."""
    return np.maximum(np.asarray(y, float) / np.asarray(t, float) - 1.0, 0.0)


@dataclass
class ReducedField:
    t: np.ndarray
    y: np.ndarray
    v: np.ndarray        # (n_t + 1, n_y + 1)
    meta: dict = field(default_factory=dict)

    def value(self, t, y):
        """``v`` linear in ``t`` and ``y``; ``y`` beyond the grid uses the obstacle."""
        t = float(t)
        if not self.t[0] - 1e-12 <= t <= self.t[-1] + 1e-12:
            raise DomainError(f"t={t} lies outside [{self.t[0]}, {self.t[-1]}]")
        k = min(int(np.searchsorted(self.t, t, side="right")) - 1, self.t.size - 2)
        k = max(k, 0)
        w = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        y = np.asarray(y, float)
        row = (1 - w) * self.v[k] + w * self.v[k + 1]
        inside = np.interp(y, self.y, row)
        return np.where(y <= self.y[-1], inside, reduced_obstacle(t, y))

    def lift(self, t, s, a):
        """``u(t, s, a) = s v(t, a/s)``."""
        s = np.asarray(s, float)
        return s * self.value(t, np.asarray(a, float) / s)


def solve_floating_reduced(m: ModelParams, spec: PayoffSpec, y_max: float, n_y: int, n_t: int,
                           opts: SchemeOptions = SchemeOptions(),
                           epsilon: float | None = None) -> ReducedField:
    """Backward theta-scheme for ``v`` on ``[0, y_max]``.

    ``y = 0`` needs no boundary condition: the diffusion vanishes there and
    the drift ``1 - r y`` points into the domain. At ``y_max`` the value is
    pinned to the obstacle (deep in the money).
    """
    if spec.kind is not PayoffKind.FLOATING:
        raise UnsupportedReductionError("reduction only for floating strike")
    if m.averaging is not Averaging.ARITHMETIC:
        raise UnsupportedReductionError("reduction needs arithmetic averaging")
    m.check_hypotheses()
    if n_y < 8 or n_t < 1 or not y_max > 0:
        raise ValueError("need n_y >= 8, n_t >= 1 and y_max > 0")
    eps = 1e-4 * m.T if epsilon is None else epsilon
    y = np.linspace(0.0, y_max, n_y + 1)
    t = np.linspace(eps, m.T, n_t + 1)
    dy = y[1] - y[0]
    N = y.size

    c = 0.5 * m.sigma**2 * y**2
    b = 1.0 - m.r * y
    central = np.abs(b) * dy <= 2 * c
    cw = np.where(central, c / dy**2 - b / (2 * dy), c / dy**2 + np.maximum(-b, 0) / dy)
    ce = np.where(central, c / dy**2 + b / (2 * dy), c / dy**2 + np.maximum(b, 0) / dy)
    interior = np.arange(N - 1)
    nb = -np.ones((N, 3), dtype=np.int64)
    coef = np.zeros((N, 3))
    diag = np.zeros(N)
    nb[1:N - 1, 0] = np.arange(0, N - 2)
    nb[interior, 1] = interior + 1
    coef[1:N - 1, 0] = cw[1:N - 1]
    coef[interior, 1] = ce[interior]
    diag[interior] = -(coef[interior, 0] + coef[interior, 1])
    order = interior[::-1].astype(np.int64)

    def apply(v):
        out = diag * v
        out[1:N - 1] += coef[1:N - 1, 0] * v[:N - 2]
        out[interior] += coef[interior, 1] * v[interior + 1]
        return out

    v_all = np.empty((t.size, N))
    v = reduced_obstacle(t[-1], y)
    v_all[-1] = v
    iters, worst = [], 0.0
    for k in range(t.size - 2, -1, -1):
        dt = t[k + 1] - t[k]
        psi = reduced_obstacle(t[k], y)
        rhs = v.copy()
        if opts.theta < 1:
            rhs += (1 - opts.theta) * dt * apply(v)
        moff = -opts.theta * dt * coef
        mdiag = 1.0 - opts.theta * dt * diag
        new = np.maximum(v, psi)
        new[-1] = psi[-1]
        scale = max(1.0, float(psi.max()))
        it, res = _psor(new, rhs, psi, order, nb, moff, mdiag, opts.omega, opts.tol * scale,
                        opts.max_iter, dt, 200)
        if it == -2:
            new = np.maximum(v, psi)
            new[-1] = psi[-1]
            it, res = _psor(new, rhs, psi, order, nb, moff, mdiag, 1.0, opts.tol * scale,
                            opts.max_iter, dt, opts.max_iter)
        if it < 0:
            raise ConvergenceError(f"reduced PSOR did not converge at t={t[k]:.6g}")
        res = _complementarity_residual(new, rhs, psi, order, nb, moff, mdiag, dt)
        iters.append(it)
        worst = max(worst, res / scale)
        v = new
        v_all[k] = v
    return ReducedField(t, y, v_all, {"n_y": n_y, "n_t": n_t, "y_max": y_max, "theta": opts.theta,
                                      "iterations": iters[::-1],
                                      "complementarity_residual": worst})
