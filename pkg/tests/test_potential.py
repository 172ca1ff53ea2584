import numpy as np
import pytest
from hypothesis import given, strategies as st

from fchkit.errors import WellNonconvexAtMinus, WellNotTilted
from fchkit.potential import WellSpec, eval_well, validate_well

# frozen from an independent polynomial root bracketing of the default
# gamma = 0.3 well (numpy.roots oracle)
U_MAX = 0.13667504192891977


def test_minima_structure(well):
    assert eval_well(well, -1.0) == pytest.approx(0.0, abs=1e-14)
    assert eval_well(well, -1.0, 1) == pytest.approx(0.0, abs=1e-14)
    assert eval_well(well, 1.0, 1) == pytest.approx(0.0, abs=1e-14)
    assert eval_well(well, 1.0) < 0.0           # tilt
    assert eval_well(well, -1.0, 2) == pytest.approx(1.4, abs=1e-14)


def test_u_max_frozen_and_oracle(well):
    rep = validate_well(well)
    assert rep["u_max"] == pytest.approx(U_MAX, abs=1e-12)
    # independent oracle: interior root of the quartic
    roots = np.roots(well.coeffs[::-1])
    real = roots[np.abs(roots.imag) < 1e-12].real
    # exclude the double root at b_minus (numerically split around -1)
    interior = real[(real > -1.0 + 1e-4) & (real < 1.0)]
    assert rep["u_max"] == pytest.approx(float(interior.min()), abs=1e-10)


def test_validate_report_fields(well):
    rep = validate_well(well)
    assert rep["valid"]
    assert rep["Wpp_b_minus"] == pytest.approx(1.4)
    assert rep["min_W_interior"] > 0.0
    assert rep["W_b_plus"] < 0.0


def test_untilted_rejected():
    with pytest.raises(WellNotTilted):
        validate_well(WellSpec(gamma=0.0))


def test_nonconvex_at_minus_rejected():
    # gamma > 1 keeps both critical points and the tilt but flips the
    # curvature at b_minus: W''(-1) = 2 - 2 gamma < 0
    with pytest.raises(WellNonconvexAtMinus):
        validate_well(WellSpec(gamma=1.5))


def test_bad_order(well):
    with pytest.raises(ValueError):
        eval_well(well, 0.0, order=5)


def test_quintic_rejected():
    with pytest.raises(ValueError):
        WellSpec(coeffs=[0, 0, 0, 0, 0, 1.0])


@given(st.floats(-2.0, 2.0), st.integers(1, 4))
def test_derivative_consistency(u, order):
    well = WellSpec(gamma=0.3)
    h = 1e-6
    fd = (eval_well(well, u + h, order - 1)
          - eval_well(well, u - h, order - 1)) / (2.0 * h)
    assert eval_well(well, u, order) == pytest.approx(fd, abs=1e-4)


@given(st.floats(0.05, 0.7))
def test_family_structure_over_gamma(gamma):
    # above gamma ~ 0.77 the interior of the well develops a second dip
    # and the single-crossing structure assumed by validate_well is lost
    rep = validate_well(WellSpec(gamma=gamma))
    assert -1.0 < rep["u_max"] < 1.0
    assert rep["Wpp_b_minus"] > 0.0
