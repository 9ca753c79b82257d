"""Truncated computational domains, grids and far-field boundary data."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import Averaging, PayoffSpec, SpaceTimePoint, SuperSolutionParams


class DomainKind(str, enum.Enum):
    RECTANGLE = "rectangle"
    LENTIL = "lentil"


@dataclass(frozen=True)
class DomainSpec:
    kind: DomainKind
    T: float
    epsilon: Optional[float] = None
    s_min: float = 0.0
    s_max: float = 0.0
    a_min: float = 0.0
    a_max: float = 0.0
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1e-4 * self.T)
        if not 0 < self.epsilon < self.T:
            raise ValueError("need 0 < epsilon < T")
        if self.kind is DomainKind.RECTANGLE:
            if not (0 < self.s_min < self.s_max and 0 < self.a_min < self.a_max):
                raise ValueError("rectangle bounds must be positive and ordered")
        elif self.n < 1:
            raise ValueError("lentil index must be >= 1")

    @classmethod
    def rectangle(cls, s_min, s_max, a_min, a_max, T, epsilon=None) -> "DomainSpec":
        return cls(DomainKind.RECTANGLE, T, epsilon, s_min, s_max, a_min, a_max)

    @classmethod
    def lentil(cls, n: int, T: float, epsilon=None) -> "DomainSpec":
        return cls(DomainKind.LENTIL, T, epsilon, n=int(n))

    def contains(self, s, a):
        s = np.asarray(s, float)
        a = np.asarray(a, float)
        if self.kind is DomainKind.RECTANGLE:
            return (s >= self.s_min) & (s <= self.s_max) & (a >= self.a_min) & (a <= self.a_max)
        return lentil_margin(self.n, s, a) > 0

    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.kind is DomainKind.RECTANGLE:
            return self.s_min, self.s_max, self.a_min, self.a_max
        lo, hi = lentil_corners(self.n)
        return lo, hi, lo, hi


def lentil_margin(n: float, s, a):
    """Signed distance-like margin of ``D_n((c,0)) & D_n((0,c))``, ``c = n + 1/n``.

    Positive inside the lentil, negative outside. Both disks are needed to
    keep a point in the open quadrant, so no extra positivity test is needed.
    """
    c = n + 1.0 / n
    d1 = n - np.hypot(s - c, a)
    d2 = n - np.hypot(s, a - c)
    return np.minimum(d1, d2)


def lentil_corners(n: float) -> tuple[float, float]:
    """The two diagonal corners ``s = a`` where the disks' boundaries cross."""
    c = n + 1.0 / n
    disc = np.sqrt(2 * n**2 - c**2)
    return (c - disc) / 2.0, (c + disc) / 2.0


@dataclass
class Grid:
    """Tensor grid, uniform in ``log s`` and ``a``, with a domain mask.

    Arrays indexed ``[j, i]`` are ``(a, s)``. ``boundary`` flags masked nodes
    whose stencil reaches outside the mask; they carry Dirichlet data.
    """

    domain: DomainSpec
    x: np.ndarray
    s: np.ndarray
    a: np.ndarray
    t: np.ndarray
    mask: np.ndarray
    boundary: np.ndarray
    averaging: Averaging

    @property
    def interior(self) -> np.ndarray:
        return self.mask & ~self.boundary

    @property
    def shape(self):
        return self.a.size, self.s.size

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def da(self) -> float:
        return float(self.a[1] - self.a[0])

    def boundary_nodes(self) -> list[tuple[int, int]]:
        return list(zip(*np.nonzero(self.boundary)))


def build_grid(domain: DomainSpec, n_s: int, n_a: int, n_t: int,
               averaging: Averaging = Averaging.ARITHMETIC,
               box: Optional[tuple[float, float, float, float]] = None) -> Grid:
    """Grid with ``n_s``, ``n_a``, ``n_t`` intervals (``+1`` nodes) on the domain.

    ``box`` overrides the bounding box, which lets a sequence of nested
    domains share one set of nodes.
    """
    if n_s < 2 or n_a < 2 or n_t < 1:
        raise ValueError("grid needs at least 2 intervals in s and a and 1 in t")
    averaging = Averaging(averaging)
    s0, s1, a0, a1 = domain.bounding_box() if box is None else box
    x = np.linspace(np.log(s0), np.log(s1), n_s + 1)
    s = np.exp(x)
    s[0], s[-1] = s0, s1
    a = np.linspace(a0, a1, n_a + 1)
    t = np.linspace(domain.epsilon, domain.T, n_t + 1)
    S, A = np.meshgrid(s, a)
    mask = domain.contains(S, A)
    if not mask.any():
        raise DomainError("domain mask is empty on this grid")

    # stencil: s-neighbours on both sides, one a-neighbour on the upwind side
    f = averaging.f(s)
    need_s = np.zeros_like(mask)
    need_s[:, 1:-1] = mask[:, :-2] & mask[:, 2:]
    up = np.zeros_like(mask)
    up[:-1, :] = mask[1:, :]
    down = np.zeros_like(mask)
    down[1:, :] = mask[:-1, :]
    need_a = np.where(f[None, :] > 0, up, np.where(f[None, :] < 0, down, True))
    boundary = mask & ~(need_s & need_a)
    return Grid(domain, x, s, a, t, mask, boundary, averaging)


def _smoothstep(lam):
    lam = np.clip(lam, 0.0, 1.0)
    return lam * lam * (3.0 - 2.0 * lam)


def cutoff_chi(n: int, x) -> np.ndarray:
    """Cut-off equal to 1 on ``O_{n-1}``, 0 off ``O_n``, C^1 smoothstep in between.

    The blend variable is the normalised margin ``m_n / (m_n - m_{n-1})``,
    which runs from 0 on the boundary of ``O_n`` to 1 on that of ``O_{n-1}``.
    """
    if n < 2:
        raise ValueError("cut-off needs n >= 2")
    s, a = np.asarray(x[0], float), np.asarray(x[1], float)
    outer = lentil_margin(n, s, a)
    inner = lentil_margin(n - 1, s, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(inner > 0, 1.0, np.where(outer <= 0, 0.0, outer / (outer - inner)))
    return _smoothstep(lam)


def rectangle_chi(domain: DomainSpec, s, a, band: float = 0.1) -> np.ndarray:
    """Cut-off for a rectangle: 1 inside, smoothstep to 0 across the outer band.

    Distances are measured in the grid coordinates ``(log s, a)``.
    """
    xs = (np.log(s) - np.log(domain.s_min)) / (np.log(domain.s_max) - np.log(domain.s_min))
    ya = (np.asarray(a, float) - domain.a_min) / (domain.a_max - domain.a_min)
    edge = np.minimum(np.minimum(xs, 1 - xs), np.minimum(ya, 1 - ya))
    return _smoothstep(edge / band)


def blend(chi, phi, ubar):
    return chi * phi + (1.0 - chi) * ubar


def boundary_data_g(n: int, spec: PayoffSpec, p: SuperSolutionParams, z: SpaceTimePoint):
    """``chi_n phi + (1 - chi_n) u_bar`` on the lentil sequence."""
    chi = cutoff_chi(n, (z.s, z.a))
    return blend(chi, spec(z.t, z.s, z.a), p(z.t, z.s, z.a))


@dataclass
class BlendBoundary:
    """Dirichlet data ``chi phi + (1-chi) u_bar`` for a domain.

    With ``blend_terminal`` the terminal slice uses the same blend, as in the
    lentil problems whose parabolic boundary includes ``t = T``; otherwise the
    terminal condition is the payoff itself.
    """

    spec: PayoffSpec
    ubar: SuperSolutionParams
    domain: DomainSpec
    blend_terminal: bool = False
    band: float = 0.1

    def chi(self, s, a):
        if self.domain.kind is DomainKind.LENTIL:
            if self.domain.n < 2:
                return np.zeros(np.broadcast(s, a).shape)
            return cutoff_chi(self.domain.n, (s, a))
        return rectangle_chi(self.domain, s, a, self.band)

    def lateral(self, t, s, a):
        return blend(self.chi(s, a), self.spec(t, s, a), self.ubar(t, s, a))

    def terminal(self, s, a):
        T = self.domain.T
        if self.blend_terminal:
            return self.lateral(T, s, a)
        return self.spec(T, s, a)


@dataclass
class PayoffBoundary:
    """Payoff as Dirichlet data everywhere (used for the floating-strike far field)."""

    spec: PayoffSpec
    domain: DomainSpec

    def lateral(self, t, s, a):
        return self.spec(t, s, a)

    def terminal(self, s, a):
        return self.spec(self.domain.T, s, a)
