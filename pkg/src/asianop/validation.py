"""Self-checks shared by the ``validate`` command and the test suite.

Each check returns a :class:`CheckResult` with the measured value and the
tolerance it was held to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import green, operators as ops
from .errors import CalibrationError
from .model import (ModelParams, PayoffSpec, calibrate_supersolution, sample_grid,
                    verify_supersolution)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": self.value,
                "tol": self.tol, "detail": self.detail}


def _random_elements(rng, n, scale=1.0):
    return ops.GroupElement(*(scale * rng.uniform(-1, 1, size=(3, n))))


def group_law_checks(n: int = 10_000, seed: int = 0, tol: float = 1e-12) -> list[CheckResult]:
    """Associativity, inverses, dilation laws and the arithmetic translation law."""
    rng = np.random.default_rng(seed)
    a, b, c = (_random_elements(rng, n) for _ in range(3))
    lam, mu = rng.uniform(0.25, 4.0, size=(2, n))

    def dev(p, q):
        return float(max(np.max(np.abs(np.asarray(x) - np.asarray(y))) for x, y in zip(p, q)))

    assoc = dev(ops.compose_G(ops.compose_G(a, b), c), ops.compose_G(a, ops.compose_G(b, c)))
    inv = max(dev(ops.compose_G(a, ops.inverse_G(a)), ops.IDENTITY_G),
              dev(ops.compose_G(ops.inverse_G(a), a), ops.IDENTITY_G))
    dil = max(dev(ops.dilate_G(lam, ops.dilate_G(mu, a)), ops.dilate_G(lam * mu, a)),
              dev(ops.dilate_G(lam, ops.compose_G(a, b)),
                  ops.compose_G(ops.dilate_G(lam, a), ops.dilate_G(lam, b))))
    # arithmetic translations: positive multiplicative x1-component
    pa = ops.GroupElement(a.t, np.exp(a.x1), a.x2)
    pb = ops.GroupElement(b.t, np.exp(b.x1), b.x2)
    pc = ops.GroupElement(c.t, np.exp(c.x1), c.x2)
    ell = max(dev(ops.translate_A(ops.IDENTITY_A, pc), pc),
              dev(ops.translate_A(pa, ops.translate_A(pb, pc)),
                  ops.translate_A(ops.compose_A(pa, pb), pc)))
    return [CheckResult(name, v <= tol, v, tol, {"n": n})
            for name, v in (("compose_G associativity", assoc), ("inverse_G law", inv),
                            ("dilation laws", dil), ("translate_A identity and composition", ell))]


def cubic_test_function(seed: int = 1) -> ops.TestFunction:
    rng = np.random.default_rng(seed)
    coeffs = {(i, j, k): float(rng.normal())
              for i in range(4) for j in range(4) for k in range(4) if i + j + k <= 3}
    return ops.polynomial_test_function(coeffs)


def rational_test_function(step: float = 1e-4) -> ops.TestFunction:
    """``(1 + t x2) / (1 + t^2 + x1^2 + x2^2)``, differentiated numerically."""
    return ops.TestFunction(lambda t, x1, x2: (1 + t * x2) / (1 + t**2 + x1**2 + x2**2), step=step)


def invariance_checks(n: int = 200, seed: int = 3, analytic_tol: float = 1e-10,
                      fd_tol: float = 1e-6, steps=(1e-2, 1e-3, 1e-4)) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    u = cubic_test_function()
    zs = [tuple(rng.uniform(-1, 1, 3)) for _ in range(n)]
    params = [tuple(rng.uniform(-1, 1, 3)) for _ in range(n)]
    lams = rng.uniform(0.5, 2.0, n)
    out = []
    rep = ops.check_invariance(ops.L_G, ops.Action.LEFT_TRANSLATE_G, u, zip(params, zs))
    out.append(CheckResult("L_G left-translation invariance", rep.passed(analytic_tol),
                           rep.max_abs_deviation, analytic_tol, {"n": rep.n_samples}))
    rep = ops.check_invariance(ops.L_G, ops.Action.DILATE_G, u, zip(lams, zs))
    out.append(CheckResult("L_G dilation homogeneity (degree 2)", rep.passed(analytic_tol),
                           rep.max_abs_deviation, analytic_tol, {"n": rep.n_samples}))

    za = [(t, abs(x1) + 0.5, x2) for t, x1, x2 in zs[:50]]
    pa = [(t, np.exp(x1 / 2), x2) for t, x1, x2 in params[:50]]
    devs = []
    for h in steps:
        rep = ops.check_invariance(ops.L_A, ops.Action.TRANSLATE_A, rational_test_function(h),
                                   zip(pa, za))
        devs.append(rep.max_abs_deviation)
    final = devs[-1]
    out.append(CheckResult("L_A translation invariance (finite differences)", final <= fd_tol,
                           final, fd_tol, {"steps": list(steps), "deviations": devs}))
    converging = devs[1] < devs[0]
    out.append(CheckResult("L_A deviation shrinks under step refinement", converging,
                           devs[1] / devs[0], 1.0, {"steps": list(steps[:2]),
                                                    "deviations": devs[:2]}))
    return out


def gamma_G_checks(mass_tol: float = 1e-6, ck_tol: float = 1e-4,
                   min_order: float = 1.8) -> list[CheckResult]:
    starts = [(0.0, 0.3, -0.2), (0.2, -1.0, 2.0), (-0.5, 0.7, 0.1)]
    mass = max(abs(green.gamma_G_mass(z, z[0] + h) - 1.0)
               for z in starts for h in (0.3, 1.0, 2.5))
    ck = 0.0
    for z, Z, tau in (((0.0, 0.3, -0.2), (1.0, 0.5, 0.4), 0.4),
                      ((0.0, 0.3, -0.2), (1.0, 1.5, -0.4), 0.7),
                      ((0.2, -1.0, 2.0), (2.0, 0.0, 1.0), 1.1)):
        direct, composed = green.gamma_G_chapman_kolmogorov(z, Z, tau)
        ck = max(ck, abs(direct - composed))
    Z = (1.0, 0.2, 0.1)
    pts = (np.array([0.0, 0.2, -0.3, 0.4]), np.array([0.1, -0.4, 0.5, 0.0]),
           np.array([0.0, 0.3, -0.2, 0.1]))
    res = [green.gamma_G_pde_residual(pts, Z, step=h) for h in (2e-2, 1e-2, 5e-3)]
    orders = [float(np.log2(a / b)) for a, b in zip(res, res[1:])]
    return [
        CheckResult("Gamma_G normalisation", mass <= mass_tol, mass, mass_tol),
        CheckResult("Gamma_G Chapman-Kolmogorov", ck <= ck_tol, ck, ck_tol),
        CheckResult("Gamma_G PDE residual second-order decay", min(orders) >= min_order,
                    min(orders), min_order, {"steps": [2e-2, 1e-2, 5e-3], "residuals": res}),
    ]


def supersolution_check(m: ModelParams, spec: PayoffSpec, s_range, a_range,
                        n_s: int = 50, n_a: int = 50, n_t: int = 20) -> CheckResult:
    sample = sample_grid(s_range, a_range, m.T, n_s, n_a, n_t)
    try:
        p = calibrate_supersolution(m, spec, sample)
        rep = verify_supersolution(m, spec, p, sample)
    except CalibrationError as exc:
        where = exc.worst_point
        return CheckResult("super-solution certificate", False, float("nan"), 0.0,
                           {"error": str(exc),
                            "worst_point": None if where is None else [where.t, where.s, where.a]})
    return CheckResult("super-solution certificate", True, rep["max_residual"], 0.0,
                       {"alpha": p.alpha, "beta": p.beta,
                        "min_dominance_gap": rep["min_dominance_gap"], "nodes": rep["n_points"]})


def gamma_A_scaling_check(x_start=(1.5, 0.5), horizon: float = 0.5, n_paths: int = 1_000_000,
                          seed: int = 2024, threads: int = 1) -> CheckResult:
    rep = green.check_gamma_A_scaling(x_start, horizon, n_paths=int(n_paths), seed=seed,
                                      threads=threads)
    trials = [{"X1": t.X1, "orientation": t.orientation, "discrepancy": t.discrepancy,
               "noise_floor": t.noise_floor, "passed": t.passed} for t in rep.trials]
    worst = max((t.discrepancy / t.noise_floor for t in rep.trials
                 if t.orientation == (rep.resolved_orientation or "x2-X2")), default=np.inf)
    return CheckResult("Gamma_A scaling identity", rep.passed, float(worst), 3.0,
                       {"resolved_orientation": rep.resolved_orientation, "trials": trials})


def run_all(m: ModelParams, spec: PayoffSpec, s_range, a_range, density_start=(1.5, 0.5),
            density_horizon: float = 0.5, density_paths: int = 1_000_000, seed: int = 2024,
            threads: int = 1) -> list[CheckResult]:
    checks = group_law_checks() + invariance_checks() + gamma_G_checks()
    checks.append(supersolution_check(m, spec, s_range, a_range))
    checks.append(gamma_A_scaling_check(density_start, density_horizon, density_paths, seed,
                                        threads))
    return checks
