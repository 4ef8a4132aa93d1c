import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from numpy.lib.stride_tricks import sliding_window_view

from rydscan.errors import DomainError
from rydscan.metrics import (SsimParams, background_subtract, difference_map, metric_report,
                             normalize_map, profile_sbr, sbr, snr_box, ssim_compact, ssim_components,
                             ssim_index, window_stats)

unit_maps = arrays(np.float64, (12, 14), elements=st.floats(0, 1, allow_subnormal=False))


def test_default_params():
    p = SsimParams()
    assert (p.alpha, p.beta, p.gamma, p.K1, p.K2, p.L) == (1, 1, 1, 0.01, 0.03, 1)
    assert p.C1 == pytest.approx(1e-4, rel=1e-15)
    assert p.C3 == p.C2 / 2


# ---- normalization -------------------------------------------------------------

def test_normalize_scales_by_max():
    m = np.array([[1.0, 4.0], [2.0, 0.0]])
    np.testing.assert_array_equal(normalize_map(m), m * 0.25)
    np.testing.assert_array_equal(normalize_map(normalize_map(m)), normalize_map(m))
    assert np.argmax(normalize_map(m)) == np.argmax(m)


def test_normalize_zero_map():
    np.testing.assert_array_equal(normalize_map(np.zeros((3, 3))), np.zeros((3, 3)))


# ---- window statistics ---------------------------------------------------------

def test_constant_window_stats():
    s = window_stats([1, 1, 1, 1], [1, 1, 1, 1])
    assert (s.mu_i, s.sigma_i, s.sigma_ij) == (1, 0, 0)


def test_two_pixel_stats():
    s = window_stats([0, 2], [0, 2])
    assert s.mu_i == 1 and s.sigma_i == pytest.approx(2 ** 0.5, rel=1e-15) and s.sigma_ij == 2
    assert window_stats([0, 2], [2, 0]).sigma_ij == -2


def test_window_needs_two_pixels():
    with pytest.raises(DomainError):
        window_stats([1.0], [1.0])


@given(unit_maps, unit_maps)
@settings(max_examples=30, deadline=None)
def test_cauchy_schwarz_every_window(a, b):
    for wa, wb in zip(sliding_window_view(a, (8, 8)).reshape(-1, 64), sliding_window_view(b, (8, 8)).reshape(-1, 64)):
        s = window_stats(wa, wb)
        assert abs(s.sigma_ij) <= s.sigma_i * s.sigma_j + 1e-12


# ---- components ------------------------------------------------------------------

def test_identical_windows_components():
    s = window_stats([0.1, 0.5, 0.9, 0.3], [0.1, 0.5, 0.9, 0.3])
    assert [float(v) for v in ssim_components(s)] == pytest.approx([1, 1, 1], abs=1e-15)


def test_constant_windows_one_vs_zero():
    lum, con, struct = ssim_components(window_stats([1] * 4, [0] * 4))
    # 1e-4 / (1 + 1e-4)
    assert lum == pytest.approx(9.999000099990002e-05, rel=1e-12)
    assert lum == pytest.approx(9.999e-5, rel=1e-4)
    assert con == 1 and struct == 1


def test_anticorrelated_structure_negative():
    _, _, struct = ssim_components(window_stats([0, 2], [2, 0]))
    assert struct < 0


# ---- SSIM index -------------------------------------------------------------------

@given(unit_maps)
@settings(max_examples=30, deadline=None)
def test_self_similarity(a):
    assert ssim_index(a, a).mean == pytest.approx(1.0, abs=1e-12)


@given(unit_maps, unit_maps)
@settings(max_examples=30, deadline=None)
def test_symmetry_exact(a, b):
    x, y = ssim_index(a, b), ssim_index(b, a)
    assert x.mean == y.mean
    assert x.grid.tobytes() == y.grid.tobytes()


@given(unit_maps, unit_maps)
@settings(max_examples=30, deadline=None)
def test_exponent_form_equals_compact_form(a, b):
    np.testing.assert_allclose(ssim_index(a, b).grid, ssim_compact(a, b), rtol=0, atol=1e-12)


@given(unit_maps, unit_maps)
@settings(max_examples=30, deadline=None)
def test_ssim_range(a, b):
    g = ssim_index(a, b).grid
    assert np.all(g <= 1 + 1e-12) and np.all(g >= -1 - 1e-12)


def test_window_count_no_padding():
    res = ssim_index(np.zeros((20, 30)), np.zeros((20, 30)))
    assert res.grid.shape == (13, 23)
    assert ssim_index(np.zeros((20, 30)), np.zeros((20, 30)), SsimParams(stride=4)).grid.shape == (4, 6)


def test_ssim_shape_mismatch():
    with pytest.raises(DomainError):
        ssim_index(np.zeros((10, 10)), np.zeros((10, 11)))


def test_non_unit_exponents():
    rng = np.random.default_rng(5)
    a, b = rng.random((10, 10)), rng.random((10, 10))
    params = SsimParams(alpha=2.0)
    wa = sliding_window_view(a, (8, 8)).reshape(-1, 64)
    wb = sliding_window_view(b, (8, 8)).reshape(-1, 64)
    want = []
    for x, y in zip(wa, wb):
        lum, con, struct = ssim_components(window_stats(x, y), params)
        want.append(lum ** 2 * con * struct)
    np.testing.assert_allclose(ssim_index(a, b, params).grid.ravel(), want, rtol=1e-12)


# ---- differences, SBR, S/N ---------------------------------------------------------

@given(unit_maps, unit_maps)
@settings(max_examples=20, deadline=None)
def test_difference_antisymmetric(a, b):
    np.testing.assert_array_equal(difference_map(a, b), -difference_map(b, a))
    np.testing.assert_array_equal(background_subtract(a, b), -background_subtract(b, a))
    assert not np.any(difference_map(a, a))


def test_difference_shape_mismatch():
    with pytest.raises(DomainError):
        difference_map(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(DomainError):
        background_subtract(np.zeros((2, 2)), np.zeros((3, 2)))


def test_sbr_values():
    t = np.array([0.0, 0.4, 1.0, 0.2])
    assert sbr(t, t) == 1
    assert sbr([0.0, 3.2], [1.0, 2.0]) == pytest.approx(3.2, rel=1e-15)
    with pytest.raises(DomainError):
        sbr([0.0, 1.0], [2.0, 2.0])


def test_snr_uniform_quarter_box():
    m = np.ones((8, 8))
    # 16 of 64 pixels inside
    assert snr_box(m, (0, 4, 0, 4)) == pytest.approx(1 / 3, rel=1e-15)


def test_snr_all_energy_inside():
    m = np.zeros((8, 8))
    m[2:4, 2:4] = 1.0
    with pytest.raises(DomainError):
        snr_box(m, (2, 4, 2, 4))


@pytest.mark.parametrize("box", [(0, 9, 0, 4), (3, 3, 0, 4), (0, 8, 0, 8)])
def test_snr_box_bounds(box):
    with pytest.raises(DomainError):
        snr_box(np.ones((8, 8)), box)


@given(st.floats(1e-3, 1e3))
def test_sbr_snr_scale_invariant(k):
    rng = np.random.default_rng(11)
    m = rng.random((16, 16))
    box = (4, 10, 5, 12)
    assert snr_box(k * m, box) == pytest.approx(snr_box(m, box), rel=1e-12)
    assert profile_sbr(k * m, box) == pytest.approx(profile_sbr(m, box), rel=1e-12)


def test_report_echoes_params():
    r = metric_report(ssim_index(np.eye(9), np.eye(9)), sbr=2.0)
    assert r["ssim"] == pytest.approx(1.0)
    assert r["ssim_params"]["K2"] == 0.03 and r["sbr"] == 2.0
