import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from scipy.integrate import dblquad

from asianop import green
from asianop import operators as ops
from asianop.errors import DomainError


def test_normalisation_by_adaptive_quadrature():
    val, _ = dblquad(lambda X2, X1: green.gamma_G((0.0, 0.0, 0.0), (1.0, X1, X2)),
                     -20, 20, -60, 60, epsabs=1e-10, epsrel=1e-10)
    assert val == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("z, T", [((0.0, 0.3, -0.2), 0.5), ((1.0, -2.0, 4.0), 3.0),
                                  ((-0.5, 1.5, 0.0), 0.1)])
def test_normalisation_by_trapezoid(z, T):
    assert green.gamma_G_mass(z, T) == pytest.approx(1.0, abs=1e-6)


def test_mode_follows_integrated_brownian_mean():
    x1, x2, tau = 0.7, -0.4, 0.8
    g1 = np.linspace(x1 - 2, x1 + 2, 801)
    g2 = np.linspace(x2 + tau * x1 - 1, x2 + tau * x1 + 1, 801)
    d = green.gamma_G((0.0, x1, x2), (tau, g1[:, None], g2[None, :]))
    i, j = np.unravel_index(np.argmax(d), d.shape)
    assert abs(g1[i] - x1) <= 2 * (g1[1] - g1[0])
    assert abs(g2[j] - (x2 + tau * x1)) <= 2 * (g2[1] - g2[0])


def test_mean_agrees_with_simulation():
    rng = np.random.default_rng(3)
    x1, x2, tau, n, steps = 0.7, -0.4, 0.8, 40_000, 400
    dt = tau / steps
    X1 = np.full(n, x1)
    X2 = np.full(n, x2)
    for _ in range(steps):
        nxt = X1 + np.sqrt(2 * dt) * rng.standard_normal(n)
        X2 += 0.5 * dt * (X1 + nxt)
        X1 = nxt
    g1 = np.linspace(x1 - 8, x1 + 8, 801)
    g2 = np.linspace(x2 + tau * x1 - 5, x2 + tau * x1 + 5, 801)
    d = green.gamma_G((0.0, x1, x2), (tau, g1[:, None], g2[None, :]))
    w = d / d.sum()
    mean2 = float((w * g2[None, :]).sum())
    assert abs(X2.mean() - mean2) < 3 * X2.std() / np.sqrt(n)


coord = st.floats(-2, 2)


@given(st.tuples(coord, coord, coord), st.tuples(st.floats(0.1, 2), coord, coord),
       st.tuples(coord, coord, coord))
def test_translation_reduction(z, dz, zeta):
    Z = (z[0] + dz[0], z[1] + dz[1], z[2] + dz[2])
    lhs = green.gamma_G(z, Z)
    rhs = green.gamma_G(ops.compose_G(zeta, z), ops.compose_G(zeta, Z))
    assert rhs == pytest.approx(lhs, rel=1e-9, abs=1e-300)


def test_positive_and_time_ordered():
    assert green.gamma_G((0, 0, 0), (1, 5, -3)) > 0
    with pytest.raises(DomainError):
        green.gamma_G((1, 0, 0), (1, 0, 0))


def test_quadratic_form_negative_definite_symbolically():
    t = sp.symbols("t", negative=True)
    Q = sp.Matrix([[1 / t, sp.Rational(3, 2) / t**2], [sp.Rational(3, 2) / t**2, 3 / t**3]])
    assert sp.simplify(Q.det() - sp.Rational(3, 4) / t**4) == 0
    assert Q[0, 0].is_negative
    np.testing.assert_allclose(green.gamma_G_quadratic_form(-0.7),
                               np.array(Q.subs(t, -0.7), dtype=float), rtol=1e-14)


@pytest.mark.parametrize("tau", [0.3, 0.5, 0.8])
def test_chapman_kolmogorov(tau):
    direct, composed = green.gamma_G_chapman_kolmogorov((0.0, 0.2, 0.1), (1.0, 0.5, 0.4), tau)
    assert composed == pytest.approx(direct, abs=1e-4)


def test_pde_residual_second_order():
    Z = (1.0, 0.2, 0.1)
    pts = (np.array([0.0, 0.2, -0.3]), np.array([0.1, -0.4, 0.5]), np.array([0.0, 0.3, -0.2]))
    r1 = green.gamma_G_pde_residual(pts, Z, step=2e-2)
    r2 = green.gamma_G_pde_residual(pts, Z, step=1e-2)
    assert r1 / r2 >= 3.0
    assert green.gamma_G_pde_residual(pts, Z, step=1e-3) <= 1e-3


def test_pde_residual_tail_floor():
    Z = (1.0, 0.0, 0.0)
    far = (np.array([0.0]), np.array([25.0]), np.array([40.0]))
    assert green.gamma_G((0.0, 25.0, 40.0), Z) < 1e-12
    assert green.gamma_G_pde_residual(far, Z, step=1e-3) < 1e-12


def test_pde_residual_margin():
    with pytest.raises(DomainError):
        green.gamma_G_pde_residual((np.array([0.9]), np.array([0.0]), np.array([0.0])),
                                   (1.0, 0, 0), margin=0.5)


# -- arithmetic density -----------------------------------------------------

@pytest.fixture(scope="module")
def estimate():
    return green.estimate_gamma_A((1.5, 0.5), 0.5, 50_000, seed=11)


def test_x1_marginal_mean(estimate):
    assert abs(estimate.marginal_mean_x1() - 1.5) <= 3 * estimate.extra["x1_mean_se"]


def test_density_nonnegative_with_unit_mass(estimate):
    assert estimate.density.min() >= 0
    assert estimate.mass() == pytest.approx(1.0, abs=0.02)


def test_second_component_increases(estimate):
    assert estimate.extra["x2_min"] > 0.5


def test_density_reproducible_across_threads():
    a = green.estimate_gamma_A((1.0, 1.0), 0.3, 20_000, seed=4, threads=1)
    b = green.estimate_gamma_A((1.0, 1.0), 0.3, 20_000, seed=4, threads=3)
    assert np.array_equal(a.density, b.density)


def test_density_argument_errors():
    with pytest.raises(ValueError):
        green.estimate_gamma_A((1.0, 1.0), 0.3, 20_000, bandwidth=0.0)
    with pytest.raises(ValueError):
        green.estimate_gamma_A((1.0, 1.0), -0.3, 20_000)
    with pytest.raises(ValueError):
        green.estimate_gamma_A((1.0, 1.0), 0.3, 500)


def test_density_csv_round_trip(tmp_path, estimate):
    path = estimate.to_csv(tmp_path / "density.csv")
    data = np.genfromtxt(path, delimiter=",", names=True)
    n1, n2 = estimate.x1.size, estimate.x2.size
    assert np.array_equal(data["density"].reshape(n1, n2), estimate.density)
    assert np.array_equal(data["X1"].reshape(n1, n2)[:, 0], estimate.x1)


def test_scaling_identity_unit_level():
    rep = green.check_gamma_A_scaling(n_paths=100_000, X1_values=(1.0,), seed=5)
    assert rep.trial(1.0, "x2-X2").passed


def test_scaling_right_side_has_unit_mass():
    assert green.gamma_A_scaling_mass() == pytest.approx(1.0, abs=0.03)
