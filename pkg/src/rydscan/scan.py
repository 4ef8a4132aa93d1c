"""Raster scan plans, virtual scans and field-map persistence.

Grid convention: ``values[iy, ix]`` is the field at
``(x0 + ix * dx, y0 + iy * dy, z)``; the flat (canonical) index of a point
is ``iy * nx + ix`` regardless of the order in which points are visited.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Optional

import numpy as np

from .analysis import extract_at_splitting, resolution_floor
from .errors import DomainError, ParseError, RydscanError, ScanError
from .physics import DEFAULT_DIPOLE, at_splitting_to_field, field_to_at_splitting
from .sources import Scene
from .spectroscopy import LadderConfig, branch_positions, synthesize_spectrum

MAP_SCHEMA = "rydscan-map-v1"
ORDERINGS = ("raster", "serpentine")
MODES = ("direct", "spectroscopic")
KINDS = ("field", "differential")
_GRID_TOL = 1e-9

# Spectroscopic measurement settings: scanned detuning window around the
# ctr branch, widened for large splittings.
SPEC_STEP = 0.5e6
SPEC_MIN_HALF_SPAN = 50e6
SPEC_MARGIN = 30e6


def _count(extent, step):
    return int(math.floor(extent / step + _GRID_TOL)) + 1


@dataclass(frozen=True)
class ScanPlan:
    """Planar raster.  ``origin`` is the first grid point (lowest x and y)."""

    z: float
    origin: tuple[float, float]
    extent: tuple[float, float]
    steps: tuple[float, float]
    ordering: str = "raster"

    def __post_init__(self):
        dx, dy = (float(s) for s in self.steps)
        lx, ly = (float(e) for e in self.extent)
        if not (dx > 0 and dy > 0):
            raise DomainError(f"scan steps must be positive, got {self.steps!r}")
        if lx < 0 or ly < 0 or not all(map(math.isfinite, (lx, ly, dx, dy, self.z, *self.origin))):
            raise DomainError("scan extent must be finite and non-negative")
        if self.ordering not in ORDERINGS:
            raise DomainError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "extent", (lx, ly))
        object.__setattr__(self, "steps", (dx, dy))

    @property
    def shape(self) -> tuple[int, int]:
        """(ny, nx)"""
        return _count(self.extent[1], self.steps[1]), _count(self.extent[0], self.steps[0])

    @property
    def n_points(self) -> int:
        ny, nx = self.shape
        return ny * nx

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.steps[0] * np.arange(self.shape[1])

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.steps[1] * np.arange(self.shape[0])

    def order(self) -> np.ndarray:
        """Canonical flat indices in visiting order."""
        ny, nx = self.shape
        idx = np.arange(ny * nx).reshape(ny, nx)
        if self.ordering == "serpentine":
            idx[1::2] = idx[1::2, ::-1]
        return idx.ravel()

    def points(self, indices=None) -> np.ndarray:
        """(N, 3) coordinates of canonical ``indices`` (all points by default)."""
        ny, nx = self.shape
        if indices is None:
            indices = np.arange(ny * nx)
        indices = np.asarray(indices)
        iy, ix = np.divmod(indices, nx)
        return np.column_stack([self.xs[ix], self.ys[iy], np.full(indices.size, self.z)])


def make_plan(z, origin, extent, steps, ordering: str = "raster") -> ScanPlan:
    return ScanPlan(z, tuple(origin), tuple(extent), tuple(steps), ordering)


@dataclass(frozen=True, eq=False)
class FieldMap:
    plan: ScanPlan
    values: np.ndarray
    meta: dict = field(default_factory=dict)
    kind: str = "field"
    unresolved: tuple[int, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.plan.shape:
            raise DomainError(f"grid shape {values.shape} does not match plan shape {self.plan.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("map values must be finite")
        if self.kind not in KINDS:
            raise DomainError(f"map kind must be one of {KINDS}")
        if self.kind == "field" and np.any(values < 0):
            raise DomainError("field magnitudes must be non-negative")
        values.setflags(write=False)
        # The grid is stored in logical order; acquisition order is not part of a map.
        if self.plan.ordering != "raster":
            object.__setattr__(self, "plan", replace(self.plan, ordering="raster"))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))
        object.__setattr__(self, "unresolved", tuple(sorted(int(i) for i in self.unresolved)))

    def __eq__(self, other):
        if not isinstance(other, FieldMap):
            return NotImplemented
        return (self.plan == other.plan and self.kind == other.kind and self.meta == other.meta
                and self.unresolved == other.unresolved
                and self.values.tobytes() == other.values.tobytes())

    def unresolved_mask(self) -> np.ndarray:
        mask = np.zeros(self.plan.n_points, dtype=bool)
        mask[list(self.unresolved)] = True
        return mask.reshape(self.plan.shape)


# --------------------------------------------------------------------------
# Spectroscopic measurement of a single point


def measurement_grid(config: LadderConfig, omega_rf: float) -> tuple[np.ndarray, float, float]:
    """Detuning grid, ctr-branch centre and extraction half window for one point."""
    half = max(SPEC_MIN_HALF_SPAN, 0.5 * omega_rf + SPEC_MARGIN)
    centre = branch_positions(config.delta_p0, config.geometry)[1]
    n = int(math.ceil(half / SPEC_STEP))
    return centre + SPEC_STEP * np.arange(-n, n + 1), centre, half


def measure_field(e_field: float, config: LadderConfig, dipole: float = DEFAULT_DIPOLE,
                  floor: Optional[float] = None) -> tuple[float, bool]:
    """Field read back through a synthesized AT spectrum.

    Returns ``(|E|, unresolved)``.  Unresolved doublets report ``floor``
    (computed from the ladder when not given).
    """
    omega = field_to_at_splitting(float(e_field), dipole)
    cfg = config.with_omega_rf(omega)
    grid, centre, half = measurement_grid(cfg, omega)
    spectrum = synthesize_spectrum(cfg, grid)
    ext = extract_at_splitting(spectrum, centre, half)
    if ext.unresolved:
        if floor is None:
            floor = resolution_floor(config, dipole)
        return float(floor), True
    return at_splitting_to_field(ext.delta_f, dipole), False


# --------------------------------------------------------------------------
# Virtual scans


def _config_sha(config: Optional[LadderConfig]) -> str:
    if config is None:
        return ""
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _evaluate_chunk(task):
    """Worker: returns (indices, values, unresolved flags) for one row of the plan."""
    plan, scene, ladder, mode, dipole, floor, indices = task
    # Floating-point path depends only on the canonical indices of the chunk,
    # never on visiting order or worker assignment.
    canonical = np.sort(indices)
    try:
        magnitudes = scene.magnitude(plan.points(canonical))
    except RydscanError as exc:
        raise ScanError(f"scan point {int(canonical[0])}: {exc}", index=int(canonical[0])) from exc
    if mode == "direct":
        return canonical, magnitudes, np.zeros(canonical.size, dtype=bool)
    values = np.empty(canonical.size)
    flags = np.zeros(canonical.size, dtype=bool)
    for k in range(canonical.size):
        try:
            values[k], flags[k] = measure_field(magnitudes[k], ladder, dipole, floor)
        except RydscanError as exc:
            raise ScanError(f"scan point {int(canonical[k])}: {exc}", index=int(canonical[k])) from exc
    return canonical, values, flags


def run_virtual_scan(plan: ScanPlan, scene: Scene, ladder: Optional[LadderConfig] = None,
                     mode: str = "direct", jobs: int = 1, noise: float = 0.0,
                     seed: int = 0, dipole: float = DEFAULT_DIPOLE,
                     timestamp: Optional[str] = None) -> FieldMap:
    """Scan ``scene`` over ``plan``.

    ``direct`` records scene magnitudes; ``spectroscopic`` reads every
    point back through an AT spectrum (see :func:`measure_field`).
    ``noise`` adds seeded zero-mean Gaussian noise (V/m) to the recorded
    magnitudes; draws are tied to canonical indices so the map does not
    depend on ordering or ``jobs``.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if jobs < 1:
        raise DomainError("jobs must be >= 1")
    if noise < 0:
        raise DomainError("noise level must be non-negative")
    floor = None
    if mode == "spectroscopic":
        ladder = ladder if ladder is not None else LadderConfig()
        floor = resolution_floor(ladder, dipole)

    ny, nx = plan.shape
    visit = plan.order().reshape(ny, nx)
    tasks = [(plan, scene, ladder, mode, dipole, floor, row) for row in visit]
    values = np.empty(plan.n_points)
    flags = np.zeros(plan.n_points, dtype=bool)
    if jobs == 1 or len(tasks) == 1:
        results = map(_evaluate_chunk, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = pool.map(_evaluate_chunk, tasks)
    try:
        for idx, vals, fl in results:
            values[idx] = vals
            flags[idx] = fl
    finally:
        if jobs > 1 and len(tasks) > 1:
            pool.shutdown()

    if noise > 0:
        rng = np.random.default_rng(seed)
        values = np.abs(values + noise * rng.standard_normal(plan.n_points))

    meta = {"mode": mode, "scene_sha": scene.sha256(),
            "ladder_sha": _config_sha(ladder) if mode == "spectroscopic" else "",
            "noise_vpm": repr(float(noise)), "seed": str(int(seed)) if noise > 0 else ""}
    if timestamp is not None:
        meta["timestamp"] = timestamp
    return FieldMap(plan, values.reshape(ny, nx), meta, "field", tuple(np.flatnonzero(flags)))


def difference(map_a: FieldMap, map_b: FieldMap) -> FieldMap:
    """Signed ``a - b`` on the shared plan (raw values, not normalized)."""
    if map_a.plan.shape != map_b.plan.shape:
        raise DomainError("maps have different grid shapes")
    plan = replace(map_a.plan, ordering="raster")
    meta = {"minuend": map_a.meta.get("scene_sha", ""), "subtrahend": map_b.meta.get("scene_sha", "")}
    return FieldMap(plan, map_a.values - map_b.values, meta, "differential")


# --------------------------------------------------------------------------
# Profiles


@dataclass(frozen=True, eq=False)
class Profile:
    axis: str
    coordinate: float
    positions: np.ndarray
    values: np.ndarray


def extract_profile(fmap: FieldMap, axis: str, coordinate: float) -> Profile:
    """Row (``axis='x'``, at fixed y) or column (``axis='y'``, at fixed x).

    ``coordinate`` (m) snaps to the nearest grid line.
    """
    axis = axis.lower()
    if axis not in ("x", "y"):
        raise DomainError(f"axis must be 'x' or 'y', got {axis!r}")
    plan = fmap.plan
    lines = plan.ys if axis == "x" else plan.xs
    step = plan.steps[1] if axis == "x" else plan.steps[0]
    tol = 0.5 * step * _GRID_TOL + 1e-12
    if coordinate < lines[0] - tol or coordinate > lines[-1] + tol:
        raise DomainError(f"coordinate {coordinate!r} m lies outside the scanned extent "
                          f"[{lines[0]!r}, {lines[-1]!r}]")
    i = int(np.argmin(np.abs(lines - coordinate)))
    if axis == "x":
        return Profile("x", float(lines[i]), plan.xs.copy(), fmap.values[i].copy())
    return Profile("y", float(lines[i]), plan.ys.copy(), fmap.values[:, i].copy())


# --------------------------------------------------------------------------
# Persistence


def _mm_out(metres: float) -> str:
    # Decimal scaling is exact, so the value survives a save/load round trip.
    return format((Decimal(repr(float(metres))) * 1000).normalize(), "f")


def _mm_in(text: str, key: str) -> float:
    try:
        return float(Decimal(text) / 1000)
    except Exception as exc:
        raise ParseError(f"header field {key!r}: not a number: {text!r}") from exc


_HEADER_KEYS = ("z_mm", "x0_mm", "y0_mm", "lx_mm", "ly_mm", "dx_mm", "dy_mm", "nx", "ny",
                "ordering", "kind", "unresolved")


def save_map(fmap: FieldMap, path) -> None:
    """CSV grid (rows = y) preceded by ``# key=value`` header lines."""
    p = fmap.plan
    ny, nx = p.shape
    lines = [f"# schema={MAP_SCHEMA}",
             f"# z_mm={_mm_out(p.z)}",
             f"# x0_mm={_mm_out(p.origin[0])}", f"# y0_mm={_mm_out(p.origin[1])}",
             f"# lx_mm={_mm_out(p.extent[0])}", f"# ly_mm={_mm_out(p.extent[1])}",
             f"# dx_mm={_mm_out(p.steps[0])}", f"# dy_mm={_mm_out(p.steps[1])}",
             f"# nx={nx}", f"# ny={ny}", f"# ordering={p.ordering}", f"# kind={fmap.kind}",
             "# unresolved=" + ",".join(str(i) for i in fmap.unresolved)]
    for key in sorted(fmap.meta):
        value = str(fmap.meta[key])
        if "\n" in value or "=" in key or key in _HEADER_KEYS or key == "schema":
            raise DomainError(f"metadata key {key!r} cannot be stored")
        lines.append(f"# meta.{key}={value}")
    for row in fmap.values:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_map(path) -> FieldMap:
    header: dict[str, str] = {}
    meta: dict[str, str] = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                if rows:
                    raise ParseError(f"{path}: line {lineno}: header line after grid data")
                body = line[1:].strip()
                if "=" not in body:
                    raise ParseError(f"{path}: line {lineno}: expected '# key=value'")
                key, value = body.split("=", 1)
                if key.startswith("meta."):
                    meta[key[5:]] = value
                else:
                    header[key] = value
                continue
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-numeric grid value") from exc
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"{path}: line {lineno}: row has {len(rows[-1])} values, "
                                 f"expected {len(rows[0])}")
    if header.get("schema") != MAP_SCHEMA:
        raise ParseError(f"{path}: header field 'schema': expected {MAP_SCHEMA!r}, "
                         f"got {header.get('schema')!r}")
    for key in _HEADER_KEYS:
        if key not in header:
            raise ParseError(f"{path}: missing header field {key!r}")
    try:
        nx, ny = int(header["nx"]), int(header["ny"])
    except ValueError as exc:
        raise ParseError(f"{path}: header fields 'nx'/'ny' must be integers") from exc
    if len(rows) != ny or (rows and len(rows[0]) != nx):
        got = (len(rows), len(rows[0]) if rows else 0)
        raise ParseError(f"{path}: grid dimensions {got[0]}x{got[1]} do not match header ny={ny}, nx={nx}")
    try:
        plan = ScanPlan(_mm_in(header["z_mm"], "z_mm"),
                        (_mm_in(header["x0_mm"], "x0_mm"), _mm_in(header["y0_mm"], "y0_mm")),
                        (_mm_in(header["lx_mm"], "lx_mm"), _mm_in(header["ly_mm"], "ly_mm")),
                        (_mm_in(header["dx_mm"], "dx_mm"), _mm_in(header["dy_mm"], "dy_mm")),
                        header["ordering"])
    except DomainError as exc:
        raise ParseError(f"{path}: invalid plan in header: {exc}") from exc
    if plan.shape != (ny, nx):
        raise ParseError(f"{path}: header 'nx'/'ny' inconsistent with extent and step")
    grid = np.array(rows, dtype=float).reshape(ny, nx)
    if plan.ordering == "serpentine":
        # Rows stored in acquisition order: odd rows run right to left.
        grid[1::2] = grid[1::2, ::-1]
    try:
        unresolved = tuple(int(i) for i in header["unresolved"].split(",") if i)
    except ValueError as exc:
        raise ParseError(f"{path}: header field 'unresolved': expected comma-separated integers") from exc
    try:
        return FieldMap(plan, grid, meta, header["kind"], unresolved)
    except DomainError as exc:
        raise ParseError(f"{path}: {exc}") from exc
