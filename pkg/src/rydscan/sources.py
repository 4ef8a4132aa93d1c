"""Synthetic microwave scenes: horn aperture, point radiators, tags, probes.

Fields are complex scalars in V/m.  A scene is an ordered element list:
radiators add to the running field, a tag multiplies the field built so
far by its shadow mask, and a perturbing probe re-radiates it.

Coordinates are metres.  The horn aperture lies in a plane of constant z
and radiates towards +z; the cosine taper runs along y (``width``), the
uniform direction along x (``height``).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np

from .errors import DomainError, ParseError
from .physics import MW_FREQUENCY, SPEED_OF_LIGHT

SCENE_SCHEMA = "rydscan-scene-v1"
# Perturbation distance guard, in wavelengths.
PROBE_GUARD_WAVELENGTHS = 1.0 / 20.0
TAG_EDGE_WAVELENGTHS = 1.0 / 10.0
_POINT_CHUNK = 4096

FieldFn = Callable[[np.ndarray], np.ndarray]


def _vec3(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be a finite 3-vector")
    return tuple(float(a) for a in arr)


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DomainError("points must have shape (N, 3)")
    return pts


@dataclass(frozen=True)
class HornAperture:
    """Rectangular horn aperture with a cosine taper across ``width`` (along y).

    ``tilt_deg`` rotates the aperture about the x axis through its centre;
    positive tilt points the beam towards -y.
    """

    width: float = 0.138
    height: float = 0.107
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: complex = 1.0
    tilt_deg: float = 0.0
    samples_per_wavelength: float = 10.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DomainError("horn width and height must be positive")
        if not self.samples_per_wavelength >= 8:
            raise DomainError("need at least 8 aperture samples per wavelength")
        object.__setattr__(self, "center", _vec3(self.center, "horn centre"))
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass(frozen=True)
class PointRadiator:
    """Small source with the scalar near-field law e^{ikr} (1/(kr)^2 - i/(kr)).

    Quasi-static 1/r^2 core below a wavelength, 1/r radiation beyond it;
    ``amplitude`` is the field magnitude at kr = 1 (up to sqrt 2).
    """

    position: tuple[float, float, float]
    amplitude: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "radiator position"))
        object.__setattr__(self, "amplitude", complex(self.amplitude))


@dataclass(frozen=True)
class OccludingTag:
    """Rectangular target casting a geometric shadow along +z.

    ``edge`` is the width of the linear ramp at the outline; ``None``
    means a tenth of the wavelength.
    """

    width: float
    height: float
    center: tuple[float, float, float]
    transmission: float = 0.0
    edge: float | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise DomainError("tag width and height must be positive")
        if not 0 <= self.transmission <= 1:
            raise DomainError("tag transmission must lie in [0, 1]")
        if self.edge is not None and not self.edge > 0:
            raise DomainError("tag edge width must be positive")
        object.__setattr__(self, "center", _vec3(self.center, "tag centre"))


@dataclass(frozen=True)
class PerturbingProbe:
    """Induced point re-radiator of scattering length ``strength`` (m).

    With ``attached`` the probe body travels with the sensing point and
    ``position`` is its offset from it; otherwise ``position`` is fixed.
    """

    position: tuple[float, float, float]
    strength: float
    attached: bool = False

    def __post_init__(self):
        if not self.strength >= 0:
            raise DomainError("probe strength must be non-negative")
        object.__setattr__(self, "position", _vec3(self.position, "probe position"))


SourceElement = Union[HornAperture, PointRadiator, OccludingTag, PerturbingProbe]
_RADIATORS = (HornAperture, PointRadiator)


# --------------------------------------------------------------------------
# Elementary fields


@lru_cache(maxsize=32)
def _aperture_nodes(width, height, wavelength, spw):
    """Gauss-Legendre nodes and weights over the aperture (local frame)."""
    nx = max(2, int(math.ceil(spw * height / wavelength)))
    ny = max(2, int(math.ceil(spw * width / wavelength)))
    gx, wx = np.polynomial.legendre.leggauss(nx)
    gy, wy = np.polynomial.legendre.leggauss(ny)
    xs, ys = 0.5 * height * gx, 0.5 * width * gy
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(0.5 * height * wx, 0.5 * width * wy)
    U = W * np.cos(math.pi * Y / width)
    return X.ravel(), Y.ravel(), U.ravel()


def _to_horn_frame(pts, horn: HornAperture):
    rel = pts - np.asarray(horn.center)
    if horn.tilt_deg == 0:
        return rel
    a = math.radians(horn.tilt_deg)
    # Inverse of the aperture rotation about x (beam tilted towards -y).
    c, s = math.cos(a), math.sin(a)
    y = c * rel[:, 1] + s * rel[:, 2]
    z = -s * rel[:, 1] + c * rel[:, 2]
    return np.column_stack([rel[:, 0], y, z])


def horn_field(points, horn: HornAperture, wavelength: float) -> np.ndarray:
    """Rayleigh-Sommerfeld (first kind) field of the tapered aperture.

    U(r) = 1/(2 pi) sum_apert U0 (z/R) (1/R - ik) e^{ikR} / R dA.
    """
    if not wavelength > 0:
        raise DomainError("wavelength must be positive")
    local = _to_horn_frame(_points(points), horn)
    if np.any(local[:, 2] <= 0):
        raise DomainError("horn field is defined only in front of the aperture (z > 0)")
    ax, ay, weights = _aperture_nodes(horn.width, horn.height, wavelength, horn.samples_per_wavelength)
    k = 2.0 * math.pi / wavelength
    out = np.empty(local.shape[0], dtype=complex)
    for start in range(0, local.shape[0], _POINT_CHUNK // 4):
        p = local[start:start + _POINT_CHUNK // 4]
        dx = p[:, 0:1] - ax[None, :]
        dy = p[:, 1:2] - ay[None, :]
        z = p[:, 2:3]
        R = np.sqrt(dx * dx + dy * dy + z * z)
        kernel = (z / R) * (1.0 / R - 1j * k) * np.exp(1j * k * R) / R
        out[start:start + p.shape[0]] = np.sum(kernel * weights[None, :], axis=1)
    return horn.amplitude * out / (2.0 * math.pi)


def point_field(points, radiator: PointRadiator, wavelength: float) -> np.ndarray:
    pts = _points(points)
    k = 2.0 * math.pi / wavelength
    r = np.linalg.norm(pts - np.asarray(radiator.position), axis=1)
    if np.any(r == 0):
        raise DomainError("field requested at a point radiator's position")
    kr = k * r
    return radiator.amplitude * np.exp(1j * kr) * (1.0 / kr ** 2 - 1j / kr)


def wire_pair_field(points, separation: float, center=(0.0, 0.0, 0.0),
                    wavelength: float = SPEED_OF_LIGHT / MW_FREQUENCY, amplitude: complex = 1.0):
    """|E| of two equal radiators at ``center +- separation/2`` along x."""
    if not separation > 0:
        raise DomainError("wire separation must be positive")
    tips = wire_tips(separation, center)
    pts = _points(points)
    total = sum(point_field(pts, PointRadiator(t, amplitude), wavelength) for t in tips)
    return np.abs(total)


def wire_tips(separation, center=(0.0, 0.0, 0.0)):
    cx, cy, cz = _vec3(center, "wire centre")
    return ((cx - 0.5 * separation, cy, cz), (cx + 0.5 * separation, cy, cz))


def _ramp(distance_inside, edge):
    return np.clip(distance_inside / edge + 0.5, 0.0, 1.0)


def tag_shadow(points, tag: OccludingTag, wavelength: float) -> np.ndarray:
    """Shadow weight in [0, 1]: 1 well inside the projected outline, 0 outside.

    Each axis ramps linearly across ``edge`` centred on the outline, so the
    half-depth contour coincides with the tag outline.
    """
    pts = _points(points)
    if np.any(pts[:, 2] <= tag.center[2]):
        raise DomainError("tag must lie between the sources and the evaluation plane")
    edge = tag.edge if tag.edge is not None else TAG_EDGE_WAVELENGTHS * wavelength
    wx = _ramp(0.5 * tag.width - np.abs(pts[:, 0] - tag.center[0]), edge)
    wy = _ramp(0.5 * tag.height - np.abs(pts[:, 1] - tag.center[1]), edge)
    return wx * wy


def apply_tag(field_fn: FieldFn, tag: OccludingTag, wavelength: float) -> FieldFn:
    """Geometric-shadow model: inside the outline the field is scaled by the transmission."""
    def shadowed(points):
        pts = _points(points)
        depth = (1.0 - tag.transmission) * tag_shadow(pts, tag, wavelength)
        return field_fn(pts) * (1.0 - depth)

    return shadowed


def apply_probe_perturbation(field_fn: FieldFn, probe: PerturbingProbe, wavelength: float) -> FieldFn:
    """E(r) = E0(r) + s E0(r_p) e^{i 2 pi d / lambda} / max(d, lambda/20), d = |r - r_p|."""
    if probe.strength == 0:
        return field_fn
    guard = PROBE_GUARD_WAVELENGTHS * wavelength
    offset = np.asarray(probe.position)

    def perturbed(points):
        pts = _points(points)
        if probe.attached:
            rp = pts + offset
            e_probe = field_fn(rp)
        else:
            rp = np.broadcast_to(offset, pts.shape)
            e_probe = np.broadcast_to(field_fn(offset[None, :]), pts.shape[:1])
        d = np.linalg.norm(pts - rp, axis=1)
        scattered = probe.strength * e_probe * np.exp(2j * math.pi * d / wavelength) / np.maximum(d, guard)
        return field_fn(pts) + scattered

    return perturbed


# --------------------------------------------------------------------------
# Scene


@dataclass(frozen=True)
class Scene:
    frequency: float = MW_FREQUENCY
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.frequency > 0:
            raise DomainError("scene frequency must be positive")
        object.__setattr__(self, "elements", tuple(self.elements))
        if not any(isinstance(e, _RADIATORS) for e in self.elements):
            raise DomainError("a scene needs at least one radiating element")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    def field_function(self) -> FieldFn:
        lam = self.wavelength

        def zero(points):
            return np.zeros(_points(points).shape[0], dtype=complex)

        fn = zero
        for element in self.elements:
            if isinstance(element, HornAperture):
                fn = _add(fn, lambda p, e=element: horn_field(p, e, lam))
            elif isinstance(element, PointRadiator):
                fn = _add(fn, lambda p, e=element: point_field(p, e, lam))
            elif isinstance(element, OccludingTag):
                fn = apply_tag(fn, element, lam)
            elif isinstance(element, PerturbingProbe):
                fn = apply_probe_perturbation(fn, element, lam)
            else:
                raise DomainError(f"unknown scene element {element!r}")
        return fn

    def field(self, points) -> np.ndarray:
        """Complex field at ``points`` (N, 3), evaluated in fixed-size chunks."""
        pts = _points(points)
        fn = self.field_function()
        out = np.empty(pts.shape[0], dtype=complex)
        for start in range(0, pts.shape[0], _POINT_CHUNK):
            out[start:start + _POINT_CHUNK] = fn(pts[start:start + _POINT_CHUNK])
        return out

    def magnitude(self, points) -> np.ndarray:
        return np.abs(self.field(points))

    def without(self, kind) -> "Scene":
        return Scene(self.frequency, tuple(e for e in self.elements if not isinstance(e, kind)))

    def with_elements(self, *extra) -> "Scene":
        return Scene(self.frequency, self.elements + tuple(extra))

    # ---- serialisation (mm / GHz on disk) ----

    def to_dict(self) -> dict:
        return {"schema": SCENE_SCHEMA, "frequency_ghz": _from_si(self.frequency, 9),
                "elements": [_element_to_dict(e) for e in self.elements]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if not isinstance(d, dict):
            raise ParseError("scene: expected a JSON object")
        if d.get("schema") != SCENE_SCHEMA:
            raise ParseError(f"field 'schema': expected {SCENE_SCHEMA!r}, got {d.get('schema')!r}")
        freq = _to_si(_num(d, "frequency_ghz", "scene"), 9)
        raw = d.get("elements")
        if not isinstance(raw, list):
            raise ParseError("field 'elements': expected a list")
        elements = [_element_from_dict(e, i) for i, e in enumerate(raw)]
        try:
            return cls(freq, tuple(elements))
        except DomainError as exc:
            raise ParseError(f"scene: {exc}") from exc

    def sha256(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _add(f, g):
    return lambda p: f(p) + g(p)


def _to_si(value, exponent):
    from decimal import Decimal
    return float(Decimal(repr(float(value))).scaleb(exponent))


def _from_si(value, exponent):
    from decimal import Decimal
    d = Decimal(repr(float(value))).scaleb(-exponent).normalize()
    return int(d) if d == d.to_integral_value() else float(d)


def _mm(v):
    return _to_si(v, -3)


def _to_mm(v):
    return _from_si(v, -3)


def _num(d, key, where):
    if key not in d:
        raise ParseError(f"{where}: missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}: field {key!r} must be a number, got {v!r}")
    return float(v)


def _vec_mm(d, key, where):
    v = d.get(key)
    if not (isinstance(v, list) and len(v) == 3):
        raise ParseError(f"{where}: field {key!r} must be a list of 3 numbers (mm)")
    return tuple(_mm(_num({"x": c}, "x", f"{where}.{key}")) for c in v)


def _complex(d, key, where, default=1.0):
    v = d.get(key, default)
    if isinstance(v, list) and len(v) == 2:
        return complex(_num({"r": v[0]}, "r", where), _num({"i": v[1]}, "i", where))
    return complex(_num({key: v}, key, where))


def _complex_out(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _element_to_dict(e) -> dict:
    if isinstance(e, HornAperture):
        return {"type": "horn", "width_mm": _to_mm(e.width), "height_mm": _to_mm(e.height),
                "center_mm": [_to_mm(c) for c in e.center], "amplitude_vpm": _complex_out(e.amplitude),
                "tilt_deg": e.tilt_deg, "samples_per_wavelength": e.samples_per_wavelength}
    if isinstance(e, PointRadiator):
        return {"type": "point", "position_mm": [_to_mm(c) for c in e.position],
                "amplitude_vpm": _complex_out(e.amplitude)}
    if isinstance(e, OccludingTag):
        d = {"type": "tag", "width_mm": _to_mm(e.width), "height_mm": _to_mm(e.height),
             "center_mm": [_to_mm(c) for c in e.center], "transmission": e.transmission}
        if e.edge is not None:
            d["edge_mm"] = _to_mm(e.edge)
        return d
    if isinstance(e, PerturbingProbe):
        return {"type": "probe", "position_mm": [_to_mm(c) for c in e.position],
                "strength_mm": _to_mm(e.strength), "attached": e.attached}
    raise DomainError(f"unknown scene element {e!r}")


def _element_from_dict(d, i) -> SourceElement:
    where = f"elements[{i}]"
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object")
    kind = d.get("type")
    try:
        if kind == "horn":
            return HornAperture(_mm(_num(d, "width_mm", where)), _mm(_num(d, "height_mm", where)),
                                _vec_mm(d, "center_mm", where), _complex(d, "amplitude_vpm", where),
                                float(d.get("tilt_deg", 0.0)), float(d.get("samples_per_wavelength", 10.0)))
        if kind == "point":
            return PointRadiator(_vec_mm(d, "position_mm", where), _complex(d, "amplitude_vpm", where))
        if kind == "tag":
            edge = _mm(_num(d, "edge_mm", where)) if "edge_mm" in d else None
            return OccludingTag(_mm(_num(d, "width_mm", where)), _mm(_num(d, "height_mm", where)),
                                _vec_mm(d, "center_mm", where), float(d.get("transmission", 0.0)), edge)
        if kind == "probe":
            return PerturbingProbe(_vec_mm(d, "position_mm", where), _mm(_num(d, "strength_mm", where)),
                                   bool(d.get("attached", False)))
    except DomainError as exc:
        raise ParseError(f"{where}: {exc}") from exc
    raise ParseError(f"{where}: field 'type' must be one of horn/point/tag/probe, got {kind!r}")


def load_scene(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return Scene.from_dict(data)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(scene.to_dict(), indent=2) + "\n")


# --------------------------------------------------------------------------
# Ready-made scenes


def horn_scene(amplitude: float = 4.0, tilt_deg: float = 0.0, frequency: float = MW_FREQUENCY,
               center=(0.0, 0.0, 0.0)) -> Scene:
    """138 mm x 107 mm standard-gain horn."""
    return Scene(frequency, (HornAperture(0.138, 0.107, center, amplitude, tilt_deg),))


def wire_pair_scene(separation: float, amplitude: float = 1.0, center=(0.0, 0.0, 0.0),
                    frequency: float = MW_FREQUENCY) -> Scene:
    return Scene(frequency, tuple(PointRadiator(t, amplitude) for t in wire_tips(separation, center)))
