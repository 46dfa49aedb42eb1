import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from critlab.errors import InvalidInput, UnsupportedDimension
from critlab.sobolev import (
    SharpConstants,
    best_sobolev_K2,
    conformal_constant,
    critical_exponent,
    sphere_volume,
    threshold,
)


@pytest.mark.parametrize("n", range(2, 11))
def test_sphere_volume_matches_extended_precision(frozen, n):
    assert sphere_volume(n) == pytest.approx(frozen["omega"][str(n)], rel=1e-13)


def test_sphere_volume_closed_forms():
    assert sphere_volume(2) == pytest.approx(4 * math.pi, rel=1e-14)
    assert sphere_volume(3) == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert sphere_volume(4) == pytest.approx(8 * math.pi**2 / 3, rel=1e-14)


@pytest.mark.parametrize("n", range(3, 11))
def test_K2_matches_extended_precision(frozen, n):
    assert best_sobolev_K2(n) == pytest.approx(frozen["K2"][str(n)], rel=1e-12)


def test_K2_reference_values():
    # the published rounding of K(3,2)^2 is off in the sixth digit; 0.1825516 to 7 places
    assert best_sobolev_K2(3) == pytest.approx(0.182546, abs=1e-5)
    assert best_sobolev_K2(3) == pytest.approx(0.1825516, abs=1e-7)
    assert best_sobolev_K2(4) == pytest.approx(0.0974621, abs=1e-7)
    assert best_sobolev_K2(6) == pytest.approx(0.0519227, abs=1e-6)
    assert best_sobolev_K2(6) == pytest.approx(0.05192254, abs=1e-8)


def test_K2_decreasing_in_dimension():
    vals = [best_sobolev_K2(n) for n in range(3, 11)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_threshold_values(frozen):
    assert threshold(6, 1.0) == pytest.approx(frozen["threshold_S6"], rel=1e-13)
    assert threshold(6, 1.0) == pytest.approx(19.2594, abs=1e-4)
    assert threshold(5, 1.0) == 1.0 / best_sobolev_K2(5)
    assert threshold(4, 16.0) == pytest.approx(threshold(4, 1.0) / 4, rel=1e-14)
    assert threshold(4, 16.0) == pytest.approx(2.5651, abs=1e-4)


@given(st.integers(3, 10), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_threshold_homogeneity(n, s, c):
    assert threshold(n, c * s) == pytest.approx(threshold(n, s) / c ** ((n - 2) / n), rel=1e-12)


def test_threshold_rejects_nonpositive_sup():
    with pytest.raises(InvalidInput):
        threshold(6, 0.0)
    with pytest.raises(InvalidInput):
        threshold(6, -1.0)


def test_dimension_guards():
    with pytest.raises(UnsupportedDimension):
        critical_exponent(2)
    with pytest.raises(UnsupportedDimension):
        best_sobolev_K2(2)


def test_sharp_constants_record():
    c = SharpConstants.for_dim(6)
    assert c.two_star == 3.0 > 2
    assert c.K2 == pytest.approx(4 / (6 * 4 * c.omega_n ** (1 / 3)), rel=1e-12)
    assert c.threshold() == threshold(6, 1.0)
    assert conformal_constant(6) == 6.0
