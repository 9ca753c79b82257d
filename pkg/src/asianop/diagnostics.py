"""Post-processing of solved fields: exercise boundary, smooth pasting, growth bound."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError
from .solver import SolutionField, exercise_mask


@dataclass
class ExerciseBoundary:
    """Per time slice ``k`` and a-row ``j``: the s-extent of the exercise set.

    ``s_low``/``s_high`` are NaN on rows with nothing exercised.
    ``transitions[(k, j)]`` lists the indices ``i`` where the mask flips
    between nodes ``i`` and ``i + 1`` along the row.
    """

    t: np.ndarray
    a: np.ndarray
    s: np.ndarray
    s_low: np.ndarray
    s_high: np.ndarray
    transitions: dict = field(default_factory=dict)

    def to_csv(self, path) -> Path:
        """Rows ``(t, a, s_boundary_low, s_boundary_high)``, t outer, a inner."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "a", "s_boundary_low", "s_boundary_high"])
            for k, tk in enumerate(self.t):
                for j, aj in enumerate(self.a):
                    w.writerow([repr(float(tk)), repr(float(aj)),
                                repr(float(self.s_low[k, j])), repr(float(self.s_high[k, j]))])
        return path

    @staticmethod
    def read_csv(path) -> dict[str, np.ndarray]:
        data = np.genfromtxt(path, delimiter=",", names=True)
        return {name: np.asarray(data[name]) for name in data.dtype.names}

    def points(self, k: int) -> list[tuple[int, int]]:
        """``(j, i)`` pairs of the last exercised node before each exercise-to-continuation flip."""
        out = []
        for (kk, j), flips in self.transitions.items():
            if kk == k:
                out.extend((j, i) for i in flips)
        return sorted(out)


def extract_exercise_boundary(field_: SolutionField, tol: Optional[float] = None) -> ExerciseBoundary:
    """Exercise set ``u - phi <= tol * scale`` (positive payoff only), row by row."""
    if tol is None:
        ex = field_.exercised
    else:
        ex = exercise_mask(field_.u, field_.payoff, field_.mask[None], field_.slice_scale(), tol)
    n_t, n_a, n_s = ex.shape
    s_low = np.full((n_t, n_a), np.nan)
    s_high = np.full((n_t, n_a), np.nan)
    transitions = {}
    inside = field_.mask
    for k in range(n_t):
        for j in range(n_a):
            row = ex[k, j]
            if row.any():
                idx = np.flatnonzero(row)
                s_low[k, j] = field_.s[idx[0]]
                s_high[k, j] = field_.s[idx[-1]]
            both = inside[j, :-1] & inside[j, 1:]
            flips = np.flatnonzero(both & row[:-1] & ~row[1:])
            if flips.size:
                transitions[(k, j)] = [int(i) for i in flips]
    return ExerciseBoundary(field_.t.copy(), field_.a.copy(), field_.s.copy(), s_low, s_high,
                            transitions)


@dataclass
class PastingReport:
    max_mismatch: float
    n_points: int
    worst: Optional[tuple[float, float, float]]   # (t, s, a)
    exercise_side_error: float                    # max |d_s u - d_s phi| on the exercise side


def _one_sided(u_row, x, i, side):
    """Three-point one-sided derivative in ``x = log s`` at node ``i``, converted to d/ds."""
    dx = x[1] - x[0]
    if side < 0:
        d = (3 * u_row[i] - 4 * u_row[i - 1] + u_row[i - 2]) / (2 * dx)
    else:
        d = (-3 * u_row[i] + 4 * u_row[i + 1] - u_row[i + 2]) / (2 * dx)
    return d / np.exp(x[i])


def smooth_pasting_check(field_: SolutionField, boundary: ExerciseBoundary, phi_ds=None,
                         t_window=None, a_window=None, margin: int = 3,
                         on_edge: str = "raise") -> PastingReport:
    """Largest jump of ``d_s u`` across the exercise boundary.

    At each flip node both one-sided derivatives are taken at the last
    exercised node; flips with fewer than three exercised nodes on the left
    are skipped so each stencil stays on one side. Points are restricted to
    the optional ``t_window`` and ``a_window``; any selected point with fewer
    than ``margin`` solved neighbours on either side raises, or is skipped
    with ``on_edge="skip"``.
    """
    if on_edge not in ("raise", "skip"):
        raise ValueError("on_edge must be 'raise' or 'skip'")
    x = field_.x
    n_s = x.size
    worst, where, count, ex_err = 0.0, None, 0, 0.0
    for (k, j), flips in sorted(boundary.transitions.items()):
        tk, aj = field_.t[k], field_.a[j]
        if t_window is not None and not t_window[0] <= tk <= t_window[1]:
            continue
        if a_window is not None and not a_window[0] <= aj <= a_window[1]:
            continue
        row = field_.u[k, j]
        ex_row = field_.exercised[k, j]
        ok = field_.mask[j] & ~field_.boundary[j]
        for i in flips:
            if i < 2 or not ex_row[i - 2:i + 1].all():
                continue
            lo, hi = i - margin + 1, i + margin
            if lo < 0 or hi >= n_s or not ok[lo:hi + 1].all():
                if on_edge == "skip":
                    continue
                raise DomainError(f"exercise boundary at t={tk:.4g}, a={aj:.4g}, s={field_.s[i]:.4g} "
                                  "is too close to the edge of the solved domain")
            left = _one_sided(row, x, i, -1)
            right = _one_sided(row, x, i, +1)
            gap = abs(right - left)
            count += 1
            if gap > worst:
                worst, where = gap, (float(tk), float(field_.s[i]), float(aj))
            if phi_ds is not None:
                ex_err = max(ex_err, abs(left - float(phi_ds(tk, field_.s[i], aj))))
    return PastingReport(float(worst), count, where, float(ex_err))


@dataclass
class GrowthReport:
    passed: bool
    worst_ratio: float
    worst_point: Optional[tuple[float, float, float]]


def growth_bound_check(field_: SolutionField, C: float, q: float = 1.0,
                       epsilon: Optional[float] = None) -> GrowthReport:
    """Check ``|u| <= (C/t)(1 + s^q + a^q)`` at every solved node with ``t >= epsilon``."""
    t = field_.t[:, None, None]
    s = field_.s[None, None, :]
    a = field_.a[None, :, None]
    u = np.abs(field_.u)
    bound = C / t * (1.0 + s**q + a**q)
    sel = np.broadcast_to(field_.mask[None], u.shape)
    if epsilon is not None:
        sel = sel & (t >= epsilon)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(u > 0, u / bound, 0.0)
    ratio = np.where(sel, ratio, -np.inf)
    flat = int(np.argmax(ratio))
    k, j, i = np.unravel_index(flat, ratio.shape)
    worst = float(ratio[k, j, i])
    point = (float(field_.t[k]), float(field_.s[i]), float(field_.a[j]))
    return GrowthReport(worst <= 1.0, worst, point)
