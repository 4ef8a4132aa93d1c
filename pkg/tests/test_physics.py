import math

import pytest
from hypothesis import example, given, strategies as st

from rydscan.errors import DomainError
from rydscan.physics import (DEFAULT_DIPOLE, E_A0, AntennaAperture, FieldRegion, WaveGeometry,
                             at_splitting_to_field, classify_region, field_to_at_splitting,
                             rdnf_outer_bound)

HORN = AntennaAperture(0.138, 0.107, 8.556e9)


def test_wavenumbers_are_inverse_wavelengths():
    g = WaveGeometry()
    assert g.k_p == 1 / 852e-9
    assert g.k_c == 1 / 510e-9


@pytest.mark.parametrize("lp, lc", [(0, 510e-9), (852e-9, -1.0)])
def test_geometry_rejects_non_positive(lp, lc):
    with pytest.raises(DomainError):
        WaveGeometry(lp, lc)


def test_horn_rdnf_bound():
    # 2 D^2 / lambda with D = hypot(138, 107) mm, lambda = c / 8.556 GHz
    assert rdnf_outer_bound(HORN) == pytest.approx(1.7405248266785953, rel=1e-12)
    assert HORN.wavelength == pytest.approx(0.035038856708742405, rel=1e-12)


@pytest.mark.parametrize("z, region", [
    (0.0175, FieldRegion.REACTIVE_NEAR_FIELD),
    (0.0735, FieldRegion.RADIATING_NEAR_FIELD),
    (0.1235, FieldRegion.RADIATING_NEAR_FIELD),
    (3.0, FieldRegion.FAR_FIELD),
])
def test_horn_planes(z, region):
    assert classify_region(z, HORN) is region


def test_boundaries_belong_to_farther_region():
    lam = HORN.wavelength
    assert classify_region(lam, HORN) is FieldRegion.RADIATING_NEAR_FIELD
    assert classify_region(math.nextafter(lam, 0), HORN) is FieldRegion.REACTIVE_NEAR_FIELD
    assert classify_region(rdnf_outer_bound(HORN), HORN) is FieldRegion.FAR_FIELD


@pytest.mark.parametrize("z", [0.0, -0.01])
def test_non_positive_distance(z):
    with pytest.raises(DomainError):
        classify_region(z, HORN)


def test_degenerate_aperture():
    with pytest.raises(DomainError):
        classify_region(0.1, AntennaAperture(0.0, 0.0, 8.556e9))


def test_region_short_names():
    assert [r.short for r in FieldRegion] == ["RNF", "RDNF", "FF"]


def test_field_conversion_value():
    # h * 10 MHz / (1000 e a0)
    assert at_splitting_to_field(10e6) == pytest.approx(0.7815279289685485, rel=1e-12)


@pytest.mark.parametrize("df, dip", [(-1.0, DEFAULT_DIPOLE), (1e6, 0.0), (1e6, -E_A0)])
def test_field_conversion_domain(df, dip):
    with pytest.raises(DomainError):
        at_splitting_to_field(df, dip)


@given(st.floats(0, 1e9), st.floats(1.0, 1e4))
def test_field_conversion_round_trip(df, dip_au):
    dip = dip_au * E_A0
    assert field_to_at_splitting(at_splitting_to_field(df, dip), dip) == pytest.approx(df, rel=1e-12, abs=1e-6)


@given(st.floats(0, 1e9), st.floats(0.1, 10))
@example(2.8989774159980768e-291, 2.0)  # must not underflow before scaling
def test_field_conversion_linear(df, a):
    assert at_splitting_to_field(a * df) == pytest.approx(a * at_splitting_to_field(df), rel=1e-12, abs=1e-300)
