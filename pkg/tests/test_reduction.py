import numpy as np
import pytest
from hypothesis import given, strategies as st

from asianop.errors import DomainError, UnsupportedReductionError
from asianop.model import ModelParams, PayoffSpec, calibrate_supersolution, sample_grid
from asianop.domains import DomainSpec
from asianop.reduction import reduced_obstacle, solve_floating_reduced
from asianop.solver import SchemeOptions, solve_rectangle


@pytest.fixture(scope="module")
def reduced(model, floating):
    return solve_floating_reduced(model, floating, 8.0, 400, 256)


def test_fixed_strike_is_rejected(model, fixed):
    with pytest.raises(UnsupportedReductionError, match="floating"):
        solve_floating_reduced(model, fixed, 8.0, 100, 50)


def test_geometric_averaging_is_rejected(floating):
    with pytest.raises(UnsupportedReductionError):
        solve_floating_reduced(ModelParams(0.4, 0.05, 1.0, "geometric"), floating, 8.0, 100, 50)


def test_obstacle_vanishes_on_the_diagonal():
    t = np.linspace(0.1, 1.0, 10)
    np.testing.assert_array_equal(reduced_obstacle(t, t), 0.0)


def test_value_dominates_obstacle(reduced):
    psi = reduced_obstacle(reduced.t[:, None], reduced.y[None, :])
    assert np.all(reduced.v >= psi - 1e-12)
    assert reduced.meta["complementarity_residual"] <= 1e-8


@given(lam=st.floats(0.2, 5.0), s=st.floats(0.5, 2.0), a=st.floats(0.05, 2.0),
       t=st.floats(0.1, 0.99))
def test_lift_is_homogeneous_of_degree_one(reduced, lam, s, a, t):
    assert reduced.lift(t, lam * s, lam * a) == pytest.approx(lam * reduced.lift(t, s, a),
                                                              rel=1e-12, abs=1e-14)


def test_outside_time_range_raises(reduced):
    with pytest.raises(DomainError):
        reduced.value(1.5, 0.5)
    with pytest.raises(DomainError):
        reduced.value(0.0, 0.5)


def test_coarse_lift_tracks_two_dimensional_solve(model, floating, reduced):
    box = ((0.25, 4.0), (0.01, 3.01))
    p = calibrate_supersolution(model, floating, sample_grid(*box, 1.0))
    field, _ = solve_rectangle(model, floating, p, DomainSpec.rectangle(*box[0], *box[1], 1.0),
                               64, 48, 64, SchemeOptions(transport="limited"))
    kt = np.flatnonzero(field.t >= 0.5)
    js = np.flatnonzero((field.a >= 0.3) & (field.a <= 1.0))
    is_ = np.flatnonzero((field.s >= 0.8) & (field.s <= 1.25))
    u2 = field.u[np.ix_(kt, js, is_)]
    u1 = np.stack([reduced.lift(field.t[k], field.s[None, is_], field.a[js, None]) for k in kt])
    assert np.abs(u1 - u2).max() / np.abs(u2).max() < 0.03
