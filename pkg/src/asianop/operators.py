"""Kolmogorov operators of the Asian pricing problem and their group structure.

Operators act on :class:`TestFunction` objects at points ``z = (t, x1, x2)``.
The Lie-group law, dilations and the arithmetic translation are affine maps
in ``z`` once the acting element is fixed, which is what the invariance
checks exploit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional

import numpy as np

from .errors import DomainError
from .model import Averaging, ModelParams, SpaceTimePoint


class GroupElement(NamedTuple):
    t: float
    x1: float
    x2: float


IDENTITY_G = GroupElement(0.0, 0.0, 0.0)
IDENTITY_A = GroupElement(0.0, 1.0, 0.0)


def compose_G(zp, z) -> GroupElement:
    """``(t',x') o (t,x) = (t'+t, x1'+x1, x2'+x2+t x1')``."""
    return GroupElement(zp[0] + z[0], zp[1] + z[1], zp[2] + z[2] + z[0] * zp[1])


def inverse_G(z) -> GroupElement:
    t, x1, x2 = z
    return GroupElement(-t, -x1, -x2 + t * x1)


def dilate_G(lam, z) -> GroupElement:
    if np.any(np.asarray(lam) <= 0):
        raise ValueError("dilation factor must be positive")
    return GroupElement(lam**2 * z[0], lam * z[1], lam**3 * z[2])


def translate_A(zp, z) -> GroupElement:
    """Arithmetic translation ``l_{z'}(z) = (t'+t, x1' x1, x2' + x1' x2)``."""
    if np.any(np.asarray(zp[1]) <= 0) or np.any(np.asarray(z[1]) <= 0):
        raise DomainError("translate_A needs positive x1 for both elements")
    return GroupElement(zp[0] + z[0], zp[1] * z[1], zp[2] + zp[1] * z[2])


def compose_A(zpp, zp) -> GroupElement:
    """Composition induced by ``translate_A``: ``l_{z''} o l_{z'} = l_{compose_A(z'', z')}``."""
    return GroupElement(zpp[0] + zp[0], zpp[1] * zp[1], zpp[2] + zpp[1] * zp[2])


def homogeneous_norm_G(z) -> float:
    """``|t|^(1/2) + |x1| + |x2|^(1/3)``, homogeneous of degree one under ``dilate_G``."""
    return np.sqrt(np.abs(z[0])) + np.abs(z[1]) + np.cbrt(np.abs(z[2]))


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

@dataclass
class TestFunction:
    """Evaluator ``f(t, x1, x2)`` with optional analytic partials.

    Missing partials fall back to central differences with step
    ``step * max(1, |coordinate|)``.
    """

    __test__ = False  # keep pytest from collecting this class

    f: Callable
    dt: Optional[Callable] = None
    d1: Optional[Callable] = None
    d11: Optional[Callable] = None
    d2: Optional[Callable] = None
    step: float = 1e-4

    @property
    def analytic(self) -> bool:
        return all(g is not None for g in (self.dt, self.d1, self.d11, self.d2))

    def with_step(self, step: float) -> "TestFunction":
        return TestFunction(self.f, self.dt, self.d1, self.d11, self.d2, step)

    def numeric(self, step: Optional[float] = None) -> "TestFunction":
        """Same function with analytic partials dropped."""
        return TestFunction(self.f, step=self.step if step is None else step)

    def partials(self, t, x1, x2):
        """Return ``(u, u_t, u_1, u_11, u_2)`` at the point."""
        f = self.f
        u = f(t, x1, x2)
        ht = self.step * np.maximum(1.0, np.abs(t))
        h1 = self.step * np.maximum(1.0, np.abs(x1))
        h2 = self.step * np.maximum(1.0, np.abs(x2))
        if self.dt is not None:
            u_t = self.dt(t, x1, x2)
        else:
            u_t = (f(t + ht, x1, x2) - f(t - ht, x1, x2)) / (2 * ht)
        if self.d1 is not None:
            u_1 = self.d1(t, x1, x2)
        else:
            u_1 = (f(t, x1 + h1, x2) - f(t, x1 - h1, x2)) / (2 * h1)
        if self.d11 is not None:
            u_11 = self.d11(t, x1, x2)
        else:
            u_11 = (f(t, x1 + h1, x2) - 2 * u + f(t, x1 - h1, x2)) / h1**2
        if self.d2 is not None:
            u_2 = self.d2(t, x1, x2)
        else:
            u_2 = (f(t, x1, x2 + h2) - f(t, x1, x2 - h2)) / (2 * h2)
        return u, u_t, u_1, u_11, u_2


def polynomial_test_function(coeffs: dict[tuple[int, int, int], float]) -> TestFunction:
    """Polynomial ``sum c * t^i x1^j x2^k`` with exact partials."""
    items = list(coeffs.items())

    def term(i, j, k, di, dj, dk):
        # derivative of t^i x1^j x2^k: returns (factor, exponents) or None
        fac = 1.0
        for p, d in ((i, di), (j, dj), (k, dk)):
            for q in range(d):
                fac *= p - q
        if fac == 0:
            return None
        return fac, (i - di, j - dj, k - dk)

    def build(di, dj, dk):
        parts = []
        for (i, j, k), c in items:
            tm = term(i, j, k, di, dj, dk)
            if tm is not None:
                parts.append((c * tm[0], tm[1]))

        def g(t, x1, x2):
            out = 0.0 * (np.asarray(t, float) + np.asarray(x1, float) + np.asarray(x2, float))
            for c, (i, j, k) in parts:
                out = out + c * np.power(t, i) * np.power(x1, j) * np.power(x2, k)
            return out
        return g

    return TestFunction(build(0, 0, 0), dt=build(1, 0, 0), d1=build(0, 1, 0),
                        d11=build(0, 2, 0), d2=build(0, 0, 1))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

class OperatorKind(str, enum.Enum):
    FULL = "L"
    ARITHMETIC = "L_A"
    GEOMETRIC = "L_G"
    PERTURBED = "L_H"


@dataclass(frozen=True)
class OperatorTag:
    kind: OperatorKind
    model: Optional[ModelParams] = None
    a_H: Optional[Callable] = None
    a_bounds: tuple[float, float] = (0.0, np.inf)

    @classmethod
    def full(cls, model: ModelParams) -> "OperatorTag":
        return cls(OperatorKind.FULL, model=model)

    @classmethod
    def perturbed(cls, a_H: Callable, a_low: float, a_high: float) -> "OperatorTag":
        if not 0 < a_low <= a_high:
            raise ValueError("need 0 < a_low <= a_high")
        return cls(OperatorKind.PERTURBED, a_H=a_H, a_bounds=(a_low, a_high))

    @property
    def needs_positive_x1(self) -> bool:
        return self.kind in (OperatorKind.FULL, OperatorKind.ARITHMETIC)


L_A = OperatorTag(OperatorKind.ARITHMETIC)
L_G = OperatorTag(OperatorKind.GEOMETRIC)


def apply_operator(tag: OperatorTag, u: TestFunction, z) -> float:
    t, x1, x2 = (z.t, z.x1, z.x2) if isinstance(z, SpaceTimePoint) else z
    if tag.needs_positive_x1 and np.any(np.asarray(x1) <= 0):
        raise DomainError(f"{tag.kind.value} requires x1 > 0")
    v, v_t, v_1, v_11, v_2 = u.partials(t, x1, x2)
    if tag.kind is OperatorKind.FULL:
        m = tag.model
        return (0.5 * m.sigma**2 * x1**2 * v_11 + m.r * x1 * v_1
                + m.averaging.f(x1) * v_2 + v_t - m.r * v)
    if tag.kind is OperatorKind.ARITHMETIC:
        return x1**2 * v_11 + x1 * v_2 + v_t
    if tag.kind is OperatorKind.GEOMETRIC:
        return v_11 + x1 * v_2 + v_t
    coef = tag.a_H(t, x1, x2)
    lo, hi = tag.a_bounds
    if np.any(coef < lo) or np.any(coef > hi):
        raise DomainError("a_H leaves its declared bounds at this point")
    return coef * v_11 + x1 * v_2 + v_t


# ---------------------------------------------------------------------------
# invariance checks
# ---------------------------------------------------------------------------

class Action(str, enum.Enum):
    LEFT_TRANSLATE_G = "left_translate_G"
    DILATE_G = "dilate_G"
    TRANSLATE_A = "translate_A"


def _affine_action(action: Action, param):
    """Return ``(J, c)`` with ``action(z) = J z + c`` and the operator weight."""
    if action is Action.LEFT_TRANSLATE_G:
        tp, x1p, x2p = param
        J = np.array([[1.0, 0, 0], [0, 1.0, 0], [x1p, 0, 1.0]])
        return J, np.array([tp, x1p, x2p]), 1.0
    if action is Action.DILATE_G:
        lam = float(param)
        if lam <= 0:
            raise ValueError("dilation factor must be positive")
        return np.diag([lam**2, lam, lam**3]), np.zeros(3), lam**2
    tp, x1p, x2p = param
    if x1p <= 0:
        raise DomainError("translate_A needs positive x1'")
    return np.diag([1.0, x1p, x1p]), np.array([tp, 0.0, x2p]), 1.0


def pullback(u: TestFunction, J: np.ndarray, c: np.ndarray) -> TestFunction:
    """``v(z) = u(J z + c)`` with chain-rule partials when ``u`` has analytic ones.

    Only maps whose x1-column is ``(0, j, 0)`` are supported, which covers every
    action used here and keeps ``v_11 = j^2 u_11``.
    """
    if J[0, 1] != 0 or J[2, 1] != 0:
        raise ValueError("pullback supports maps that move x1 only along x1")

    def image(t, x1, x2):
        return (J[0, 0] * t + J[0, 1] * x1 + J[0, 2] * x2 + c[0],
                J[1, 0] * t + J[1, 1] * x1 + J[1, 2] * x2 + c[1],
                J[2, 0] * t + J[2, 1] * x1 + J[2, 2] * x2 + c[2])

    def f(t, x1, x2):
        return u.f(*image(t, x1, x2))

    if not u.analytic:
        return TestFunction(f, step=u.step)

    def grad(t, x1, x2):
        w = image(t, x1, x2)
        return u.dt(*w), u.d1(*w), u.d2(*w)

    def dcol(col):
        def g(t, x1, x2):
            gt, g1, g2 = grad(t, x1, x2)
            return J[0, col] * gt + J[1, col] * g1 + J[2, col] * g2
        return g

    def d11(t, x1, x2):
        return J[1, 1] ** 2 * u.d11(*image(t, x1, x2))

    return TestFunction(f, dt=dcol(0), d1=dcol(1), d11=d11, d2=dcol(2), step=u.step)


@dataclass
class InvarianceReport:
    operator: str
    action: str
    max_abs_deviation: float
    max_rel_deviation: float
    n_samples: int
    step: Optional[float]
    analytic: bool

    def passed(self, tol: float) -> bool:
        return self.max_abs_deviation <= tol


def check_invariance(tag: OperatorTag, action: Action, u: TestFunction,
                     samples: Iterable[tuple]) -> InvarianceReport:
    """Compare ``L(u o A)(z)`` with ``w (L u)(A z)`` over ``(param, z)`` samples.

    ``param`` is the acting group element, or the factor for dilations
    (``w = lambda^2`` there, 1 otherwise).
    """
    action = Action(action)
    if action is Action.DILATE_G and tag.kind is not OperatorKind.GEOMETRIC:
        raise ValueError("dilation homogeneity is a property of L_G only")
    worst = 0.0
    worst_rel = 0.0
    n = 0
    for param, z in samples:
        J, c, weight = _affine_action(action, param)
        zv = np.array([z[0], z[1], z[2]], dtype=float)
        lhs = apply_operator(tag, pullback(u, J, c), tuple(zv))
        rhs = weight * apply_operator(tag, u, tuple(J @ zv + c))
        dev = float(np.abs(lhs - rhs))
        worst = max(worst, dev)
        worst_rel = max(worst_rel, dev / max(1.0, abs(float(rhs))))
        n += 1
    return InvarianceReport(tag.kind.value, action.value, worst, worst_rel, n,
                            None if u.analytic else u.step, u.analytic)


# ---------------------------------------------------------------------------
# intrinsic Hölder quotients
# ---------------------------------------------------------------------------

class HolderOrder(str, enum.Enum):
    C_ALPHA = "C_alpha"
    C_1_ALPHA = "C_1_alpha"


def _holder_quotient(vals, pts, alpha, pairs):
    i, j = pairs
    z0 = GroupElement(pts[0][i], pts[1][i], pts[2][i])
    z = GroupElement(pts[0][j], pts[1][j], pts[2][j])
    d = homogeneous_norm_G(compose_G(inverse_G(z0), z))
    keep = d > 0
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(vals[j][keep] - vals[i][keep]) / d[keep] ** alpha))


def holder_seminorm_G(field, alpha: float, region, order=HolderOrder.C_ALPHA,
                      max_pairs: int = 200_000, seed: int = 0) -> float:
    """Empirical intrinsic Hölder seminorm of a gridded field over ``region``.

    ``field`` exposes ``t, s, a`` axes and values ``u[k, j, i]`` (time, a, s);
    ``region`` is ``((t0, t1), (s0, s1), (a0, a1))``. Pairs are drawn from a
    fixed permutation, so a larger ``max_pairs`` evaluates a superset of pairs
    and the estimate never decreases.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    order = HolderOrder(order)
    (t0, t1), (s0, s1), (a0, a1) = region
    kt = np.flatnonzero((field.t >= t0) & (field.t <= t1))
    js = np.flatnonzero((field.a >= a0) & (field.a <= a1))
    is_ = np.flatnonzero((field.s >= s0) & (field.s <= s1))
    if order is HolderOrder.C_1_ALPHA:
        is_ = is_[(is_ > 0) & (is_ < field.s.size - 1)]
    K, Jj, I = np.meshgrid(kt, js, is_, indexing="ij")
    K, Jj, I = K.ravel(), Jj.ravel(), I.ravel()
    vals = field.u[K, Jj, I]
    ok = np.isfinite(vals)
    K, Jj, I, vals = K[ok], Jj[ok], I[ok], vals[ok]
    npts = vals.size
    if npts < 2:
        raise ValueError("degenerate region: fewer than two grid points")
    pts = (field.t[K], field.s[I], field.a[Jj])

    total = npts * (npts - 1) // 2
    if total <= max_pairs:
        iu = np.triu_indices(npts, 1)
        pairs = (iu[0], iu[1])
    else:
        rng = np.random.default_rng(seed)
        # fixed stream of candidate pairs; a prefix is a subset of any longer prefix
        draws = rng.integers(0, npts, size=(max_pairs, 2))
        keep = draws[:, 0] != draws[:, 1]
        pairs = (draws[keep, 0], draws[keep, 1])

    est = _holder_quotient(vals, pts, alpha, pairs)
    if order is HolderOrder.C_1_ALPHA:
        s = field.s
        du = (field.u[K, Jj, I + 1] - field.u[K, Jj, I - 1]) / (s[I + 1] - s[I - 1])
        good = np.isfinite(du)
        du = np.where(good, du, 0.0)
        est += _holder_quotient(du, pts, alpha, pairs)
    return est
