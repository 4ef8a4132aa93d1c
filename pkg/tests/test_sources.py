import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import find_peaks

from rydscan.analysis import fit_baseline_and_peaks, peak_separation
from rydscan.errors import DomainError, ParseError
from rydscan.physics import MW_FREQUENCY, SPEED_OF_LIGHT
from rydscan.sources import (HornAperture, OccludingTag, PerturbingProbe, PointRadiator, Scene,
                             apply_probe_perturbation, apply_tag, horn_field, horn_scene, load_scene,
                             point_field, save_scene, tag_shadow, wire_pair_field, wire_pair_scene)

LAM = SPEED_OF_LIGHT / MW_FREQUENCY
HORN = HornAperture(0.138, 0.107)


def row(xs, y=0.0, z=0.0175):
    xs = np.asarray(xs, dtype=float)
    return np.column_stack([xs, np.full(xs.size, y), np.full(xs.size, z)])


# ---- horn ----------------------------------------------------------------

@given(st.floats(0.0, 0.08), st.floats(-0.06, 0.06), st.floats(0.005, 0.2))
@settings(max_examples=30, deadline=None)
def test_horn_mirror_symmetry(d, y, z):
    pts = np.array([[d, y, z], [-d, y, z], [d, -y, z]])
    e = np.abs(horn_field(pts, HORN, LAM))
    assert e[1] == pytest.approx(e[0], rel=1e-9)
    assert e[2] == pytest.approx(e[0], rel=1e-9)


def test_horn_lobes_at_half_wavelength():
    xs = np.linspace(-0.1, 0.1, 401)
    e = np.abs(horn_field(row(xs, z=LAM / 2), HORN, LAM))
    peaks, _ = find_peaks(e)
    centre = np.argmin(np.abs(xs))
    assert centre in peaks
    assert np.sum(xs[peaks] < 0) >= 1 and np.sum(xs[peaks] > 0) >= 1
    assert len(peaks) >= 3


def test_horn_linear_in_amplitude():
    pts = row(np.linspace(-0.05, 0.05, 21))
    e1 = horn_field(pts, HORN, LAM)
    e2 = horn_field(pts, HornAperture(0.138, 0.107, amplitude=2.0), LAM)
    np.testing.assert_allclose(np.abs(e2), 2 * np.abs(e1), rtol=1e-14)


def test_horn_quadrature_converged():
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-0.06, 0.06, 100), rng.uniform(-0.07, 0.07, 100),
                           rng.uniform(0.0175, 0.13, 100)])
    fine = HornAperture(0.138, 0.107, samples_per_wavelength=20)
    a, b = np.abs(horn_field(pts, HORN, LAM)), np.abs(horn_field(pts, fine, LAM))
    assert np.max(np.abs(a - b) / b) < 5e-3


@pytest.mark.parametrize("z", [0.0, -0.01])
def test_horn_behind_aperture(z):
    with pytest.raises(DomainError):
        horn_field(np.array([[0.0, 0.0, z]]), HORN, LAM)


def test_horn_tilt_breaks_y_symmetry():
    tilted = HornAperture(0.138, 0.107, tilt_deg=5.0)
    pts = np.array([[0.0, 0.03, 0.0735], [0.0, -0.03, 0.0735]])
    e = np.abs(horn_field(pts, tilted, LAM))
    assert e[1] > e[0]


def test_horn_needs_enough_samples():
    with pytest.raises(DomainError):
        HornAperture(0.138, 0.107, samples_per_wavelength=6)


# ---- point radiators and wires --------------------------------------------

def test_point_field_near_and_far_laws():
    src = PointRadiator((0.0, 0.0, 0.0))
    k = 2 * math.pi / LAM
    near = np.abs(point_field(np.array([[1e-4, 0, 0], [2e-4, 0, 0]]), src, LAM))
    assert near[0] / near[1] == pytest.approx(4.0, rel=2e-3)
    far = np.abs(point_field(np.array([[100 / k, 0, 0], [200 / k, 0, 0]]), src, LAM))
    assert far[0] / far[1] == pytest.approx(2.0, rel=2e-4)


@pytest.mark.parametrize("dd", [1.2e-3, 5e-3])
def test_wire_maxima_track_spacing(dd):
    xs = np.arange(-dd / 2 - 2e-3, dd / 2 + 2e-3 + 1e-12, 0.01e-3)
    e = wire_pair_field(row(xs, z=0.2e-3), dd)
    peaks, _ = find_peaks(e)
    assert len(peaks) == 2
    assert xs[peaks[1]] - xs[peaks[0]] == pytest.approx(dd, rel=0.05)
    mid = np.argmin(np.abs(xs))
    assert e[mid] < e[peaks[0]] and e[mid] <= e[mid - 1] and e[mid] <= e[mid + 1]


def test_wire_separation_slope():
    dds = np.arange(1, 6) * 1e-3
    seps = []
    for dd in dds:
        half = dd / 2 + 1.5e-3
        xs = np.arange(-half, half + 1e-12, 0.03e-3)
        e = wire_pair_field(row(xs, z=0.3e-3), dd)
        fit = fit_baseline_and_peaks(xs * 1e3, e, n_peaks=2, exclusion=(-(dd / 2 + 0.6e-3) * 1e3, (dd / 2 + 0.6e-3) * 1e3))
        seps.append(peak_separation(fit) * 1e-3)
    slope = np.polyfit(dds, seps, 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_wire_requires_positive_spacing():
    with pytest.raises(DomainError):
        wire_pair_field(row([0.0]), 0.0)


def test_scene_superposition():
    a = PointRadiator((0.01, 0.0, 0.0), 1.0)
    b = PointRadiator((-0.01, 0.002, 0.0), 0.5 - 0.3j)
    pts = row(np.linspace(-0.02, 0.02, 11), z=0.005)
    both = Scene(MW_FREQUENCY, (a, b)).field(pts)
    np.testing.assert_allclose(both, point_field(pts, a, LAM) + point_field(pts, b, LAM), rtol=1e-13)


def test_scene_needs_radiator():
    with pytest.raises(DomainError):
        Scene(MW_FREQUENCY, (OccludingTag(0.01, 0.01, (0, 0, 0.01)),))
    with pytest.raises(DomainError):
        Scene(0.0, (PointRadiator((0, 0, 0)),))


# ---- tag -----------------------------------------------------------------

TAG = OccludingTag(0.02, 0.01, (0.0, 0.0, 0.0125), 0.0)


def _horn_fn(p):
    return horn_field(p, HORN, LAM)


def test_tag_transmission_one_is_identity():
    pts = row(np.linspace(-0.03, 0.03, 31))
    clear = OccludingTag(0.02, 0.01, (0.0, 0.0, 0.0125), 1.0)
    np.testing.assert_array_equal(apply_tag(_horn_fn, clear, LAM)(pts), _horn_fn(pts))


def test_opaque_tag_centre_is_dark():
    assert apply_tag(_horn_fn, TAG, LAM)(np.array([[0.0, 0.0, 0.0175]]))[0] == 0


def test_shadow_half_depth_width():
    xs = np.linspace(-0.02, 0.02, 40001)
    w = tag_shadow(row(xs), TAG, LAM)
    inside = xs[w >= 0.5]
    # ramp construction: half depth sits exactly on the outline
    assert inside[-1] - inside[0] == pytest.approx(TAG.width, abs=LAM / 10)
    assert inside[-1] - inside[0] == pytest.approx(TAG.width, abs=2e-6)


def test_tag_must_precede_plane():
    with pytest.raises(DomainError):
        apply_tag(_horn_fn, TAG, LAM)(np.array([[0.0, 0.0, 0.01]]))


@pytest.mark.parametrize("t", [-0.1, 1.1])
def test_tag_transmission_range(t):
    with pytest.raises(DomainError):
        OccludingTag(0.01, 0.01, (0, 0, 0.01), t)


# ---- perturbing probe --------------------------------------------------------

def test_zero_strength_is_identity():
    pts = row(np.linspace(-0.03, 0.03, 31))
    fn = apply_probe_perturbation(_horn_fn, PerturbingProbe((0, 0, 0.02), 0.0), LAM)
    np.testing.assert_array_equal(fn(pts), _horn_fn(pts))


def test_perturbation_falls_as_inverse_distance():
    probe = PerturbingProbe((0.0, 0.0, 0.02), 1e-3)
    fn = apply_probe_perturbation(_horn_fn, probe, LAM)
    d = np.array([0.004, 0.008, 0.016])
    pts = np.column_stack([d, np.zeros(3), np.full(3, 0.02)])
    scattered = np.abs(fn(pts) - _horn_fn(pts))
    np.testing.assert_allclose(scattered * d, scattered[0] * d[0], rtol=1e-12)


def test_perturbation_guarded_at_probe():
    probe = PerturbingProbe((0.0, 0.0, 0.02), 1e-3)
    fn = apply_probe_perturbation(_horn_fn, probe, LAM)
    pts = np.array([[0.0, 0.0, 0.02]])
    e0 = _horn_fn(pts)[0]
    assert abs(fn(pts)[0] - e0) == pytest.approx(abs(1e-3 * e0 / (LAM / 20)), rel=1e-12)


def test_attached_probe_travels_with_point():
    probe = PerturbingProbe((0.0, 0.0, 0.01), 2e-3, attached=True)
    pts = row(np.linspace(-0.02, 0.02, 5))
    got = apply_probe_perturbation(_horn_fn, probe, LAM)(pts)
    rp = pts + np.array([0.0, 0.0, 0.01])
    want = _horn_fn(pts) + 2e-3 * _horn_fn(rp) * np.exp(2j * math.pi * 0.01 / LAM) / 0.01
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_negative_strength():
    with pytest.raises(DomainError):
        PerturbingProbe((0, 0, 0), -1e-3)


# ---- scene files -------------------------------------------------------------

def test_scene_round_trip(tmp_path):
    scene = Scene(MW_FREQUENCY, (HornAperture(0.138, 0.107, (0, 0, 0), 4.0, 5.0),
                                 PointRadiator((0.001, -0.002, 0.0), 0.5 + 0.25j),
                                 OccludingTag(0.02, 0.01, (0.0, 0.0, 0.0125), 0.1, 0.002),
                                 PerturbingProbe((0, 0, 0.01), 0.002, True)))
    save_scene(scene, tmp_path / "s.json")
    back = load_scene(tmp_path / "s.json")
    assert back == scene
    assert back.sha256() == scene.sha256()


def test_scene_parse_errors_name_field(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema": "rydscan-scene-v1", "frequency_ghz": 8.556, '
                 '"elements": [{"type": "point", "position_mm": [0, 0]}]}')
    with pytest.raises(ParseError, match=r"elements\[0\].*position_mm"):
        load_scene(p)
    p.write_text('{"schema": "rydscan-scene-v1", "frequency_ghz": 8.556, "elements": [{"type": "laser"}]}')
    with pytest.raises(ParseError, match="type"):
        load_scene(p)
    p.write_text('{"schema": "rydscan-scene-v1",\n "frequency_ghz": }')
    with pytest.raises(ParseError, match="line 2"):
        load_scene(p)


def test_ready_made_scenes():
    assert len(horn_scene().elements) == 1
    tips = [e.position for e in wire_pair_scene(1.2e-3).elements]
    assert tips == [(-0.6e-3, 0.0, 0.0), (0.6e-3, 0.0, 0.0)]
