import numpy as np
import pytest
from hypothesis import given, strategies as st

from asianop import operators as ops
from asianop.errors import DomainError
from asianop.model import ModelParams, SpaceTimePoint
from asianop.solver import SolutionField
from asianop.validation import cubic_test_function, rational_test_function

coord = st.floats(-3.0, 3.0)
elements = st.tuples(coord, coord, coord).map(lambda v: ops.GroupElement(*v))
positive_elements = st.tuples(coord, st.floats(0.1, 3.0), coord).map(lambda v: ops.GroupElement(*v))
lams = st.floats(0.2, 5.0)


def close(p, q, tol=1e-9):
    return all(abs(a - b) <= tol * max(1.0, abs(a), abs(b)) for a, b in zip(p, q))


# -- operator application ---------------------------------------------------

def poly(coeffs):
    return ops.polynomial_test_function(coeffs)


def test_L_G_on_x2():
    assert ops.apply_operator(ops.L_G, poly({(0, 0, 1): 1.0}), (0.3, 3.0, -1.0)) == 3.0


def test_L_A_on_x1_squared():
    assert ops.apply_operator(ops.L_A, poly({(0, 2, 0): 1.0}), (0.7, 2.0, 5.0)) == 8.0


def test_full_operator_on_a():
    tag = ops.OperatorTag.full(ModelParams(0.2, 0.0, 1.0))
    assert ops.apply_operator(tag, poly({(0, 0, 1): 1.0}), SpaceTimePoint(1.0, 4.0, 1.0)) == 4.0


def test_positive_x1_required():
    with pytest.raises(DomainError):
        ops.apply_operator(ops.L_A, poly({(0, 2, 0): 1.0}), (0.0, -1.0, 1.0))


def test_perturbed_with_unit_coefficient_is_L_G(rng):
    u = cubic_test_function()
    tag = ops.OperatorTag.perturbed(lambda t, x1, x2: 1.0, 0.5, 2.0)
    for z in rng.uniform(-2, 2, size=(50, 3)):
        assert ops.apply_operator(tag, u, tuple(z)) == ops.apply_operator(ops.L_G, u, tuple(z))


def test_perturbed_coefficient_bounds_enforced():
    tag = ops.OperatorTag.perturbed(lambda t, x1, x2: 3.0, 0.5, 2.0)
    with pytest.raises(DomainError):
        ops.apply_operator(tag, cubic_test_function(), (0.0, 1.0, 1.0))


def test_full_operator_is_sum_of_its_terms(rng):
    m = ModelParams(0.3, 0.04, 1.0)
    u = cubic_test_function(seed=5)
    tag = ops.OperatorTag.full(m)
    for t, s, a in rng.uniform(0.1, 2.0, size=(50, 3)):
        v, v_t, v_s, v_ss, v_a = u.partials(t, s, a)
        parts = 0.5 * m.sigma**2 * s**2 * v_ss + m.r * s * v_s + s * v_a + v_t - m.r * v
        assert ops.apply_operator(tag, u, (t, s, a)) == pytest.approx(parts, rel=1e-13, abs=1e-13)


def test_analytic_partials_match_finite_differences(rng):
    u = cubic_test_function()
    fd = u.numeric(step=1e-4)
    for z in rng.uniform(-1, 1, size=(20, 3)):
        assert np.allclose(u.partials(*z), fd.partials(*z), rtol=1e-6, atol=1e-6)


# -- group laws -------------------------------------------------------------

def test_compose_examples():
    assert ops.compose_G((1, 1, 0), (2, 0, 0)) == (3, 1, 2)
    z = ops.GroupElement(0.3, -1.2, 4.0)
    assert ops.compose_G(ops.IDENTITY_G, z) == z


def test_inverse_examples():
    assert tuple(ops.inverse_G((0, 0, 0))) == (0, 0, 0)
    assert tuple(ops.inverse_G((2, 3, 5))) == (-2, -3, 1)


def test_dilate_examples():
    assert tuple(ops.dilate_G(2.0, (1, 1, 1))) == (4, 2, 8)
    with pytest.raises(ValueError):
        ops.dilate_G(0.0, (1, 1, 1))


def test_translate_A_examples():
    z = ops.GroupElement(2.0, 4.0, 5.0)
    assert tuple(ops.translate_A(ops.IDENTITY_A, z)) == tuple(z)
    assert tuple(ops.translate_A((1, 2, 3), z)) == (3, 8, 13)
    with pytest.raises(DomainError):
        ops.translate_A((1, -2, 3), z)


@given(elements, elements, elements)
def test_associativity(a, b, c):
    assert close(ops.compose_G(ops.compose_G(a, b), c), ops.compose_G(a, ops.compose_G(b, c)))


@given(elements)
def test_two_sided_inverse_and_involution(z):
    assert close(ops.compose_G(ops.inverse_G(z), z), ops.IDENTITY_G)
    assert close(ops.compose_G(z, ops.inverse_G(z)), ops.IDENTITY_G)
    assert close(ops.inverse_G(ops.inverse_G(z)), z)


@given(lams, lams, elements, elements)
def test_dilations_one_parameter_group_and_automorphism(lam, mu, a, b):
    assert close(ops.dilate_G(lam, ops.dilate_G(mu, a)), ops.dilate_G(lam * mu, a))
    assert close(ops.dilate_G(1.0, a), a)
    assert close(ops.dilate_G(lam, ops.compose_G(a, b)),
                 ops.compose_G(ops.dilate_G(lam, a), ops.dilate_G(lam, b)))


@given(positive_elements, positive_elements, positive_elements)
def test_translate_A_action_law(a, b, c):
    lhs = ops.translate_A(a, ops.translate_A(b, c))
    assert close(lhs, ops.translate_A(ops.compose_A(a, b), c))


@given(lams, elements)
def test_homogeneous_norm_scales(lam, z):
    assert ops.homogeneous_norm_G(ops.dilate_G(lam, z)) == pytest.approx(
        lam * ops.homogeneous_norm_G(z), rel=1e-9, abs=1e-12)


def test_homogeneous_norm_examples():
    assert ops.homogeneous_norm_G((0, 0, 0)) == 0
    assert ops.homogeneous_norm_G((4, 2, 8)) == pytest.approx(6.0)


# -- invariance -------------------------------------------------------------

def test_left_translation_invariance_exact(rng):
    u = cubic_test_function()
    samples = [(tuple(rng.uniform(-1, 1, 3)), tuple(rng.uniform(-1, 1, 3))) for _ in range(100)]
    rep = ops.check_invariance(ops.L_G, ops.Action.LEFT_TRANSLATE_G, u, samples)
    assert rep.passed(1e-10) and rep.analytic and rep.n_samples == 100


def test_dilation_homogeneity_exact(rng):
    u = cubic_test_function()
    samples = [(2.0, tuple(rng.uniform(-1, 1, 3))) for _ in range(100)]
    rep = ops.check_invariance(ops.L_G, ops.Action.DILATE_G, u, samples)
    assert rep.max_abs_deviation <= 1e-10


def test_dilation_check_refused_for_L_A():
    with pytest.raises(ValueError):
        ops.check_invariance(ops.L_A, ops.Action.DILATE_G, cubic_test_function(), [])


def test_dilation_breaks_for_L_A_like_weights(rng):
    # sanity: the same polynomial is not dilation invariant without the lambda^2 weight
    u = cubic_test_function()
    z = (0.2, 0.4, -0.3)
    lhs = ops.apply_operator(ops.L_G, ops.pullback(u, np.diag([4.0, 2.0, 8.0]), np.zeros(3)), z)
    rhs = ops.apply_operator(ops.L_G, u, (0.8, 0.8, -2.4))
    assert abs(lhs - rhs) > 1e-3


def test_translate_A_invariance_converges_under_step_refinement(rng):
    pts = [(rng.uniform(-1, 1), rng.uniform(0.5, 1.5), rng.uniform(-1, 1)) for _ in range(30)]
    prm = [(rng.uniform(-1, 1), rng.uniform(0.6, 1.6), rng.uniform(-1, 1)) for _ in range(30)]
    devs = [ops.check_invariance(ops.L_A, ops.Action.TRANSLATE_A, rational_test_function(h),
                                 zip(prm, pts)).max_abs_deviation for h in (1e-2, 1e-3, 1e-4)]
    assert devs[-1] <= 1e-6
    assert devs[0] > devs[1] > devs[2]


# -- Hölder quotients -------------------------------------------------------

def _field(fn, n=9):
    t = np.linspace(0.1, 1.0, n)
    s = np.linspace(0.0, 1.0, n)
    a = np.linspace(0.0, 1.0, n)
    T, A, S = np.meshgrid(t, a, s, indexing="ij")
    u = fn(T, S, A)
    z = np.zeros_like(u, dtype=bool)
    mask = np.ones((n, n), bool)
    return SolutionField(t, s, a, u, u, mask, ~mask, z)


def test_holder_constant_field_is_zero():
    f = _field(lambda t, s, a: 0 * t + 2.0)
    assert ops.holder_seminorm_G(f, 0.5, ((0, 1), (0, 1), (0, 1))) == 0.0


def test_holder_linear_field_stable_under_refinement():
    region = ((0.1, 1.0), (0, 1), (0, 1))
    coarse = ops.holder_seminorm_G(_field(lambda t, s, a: s, 5), 0.5, region)
    fine = ops.holder_seminorm_G(_field(lambda t, s, a: s, 9), 0.5, region)
    assert 0 < coarse < np.inf
    assert abs(fine - coarse) <= 0.2 * coarse


def test_holder_monotone_in_sample_enrichment():
    f = _field(lambda t, s, a: np.sin(3 * s) * a + t, 9)
    region = ((0.1, 1.0), (0, 1), (0, 1))
    small = ops.holder_seminorm_G(f, 0.5, region, max_pairs=1000)
    large = ops.holder_seminorm_G(f, 0.5, region, max_pairs=20000)
    assert large >= small


def test_holder_degenerate_region():
    with pytest.raises(ValueError):
        ops.holder_seminorm_G(_field(lambda t, s, a: s), 0.5, ((5, 6), (0, 1), (0, 1)))
