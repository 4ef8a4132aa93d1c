"""Velocity-selective EIT / Autler-Townes spectra of the cesium ladder.

The retro-reflected probe gives two components, co- and counter-propagating
with the coupling beam.  Each selects its own velocity class, so a detuned
probe splits the EIT signal into two branches on the scanned coupling
detuning axis.  The line shape is a factorised model: Maxwell-Boltzmann
weight x Lorentzian one-photon selection x AT doublet kernel, integrated
over the atomic velocity along the beam axis.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, QuadratureError
from .physics import BOLTZMANN_K, CESIUM_MASS, WaveGeometry

LADDER_SCHEMA = "rydscan-ladder-v1"

# Integration covers +-5 sigma_v; MB weight there is < 4e-6 of its peak.
VELOCITY_SPAN_SIGMAS = 5.0
QUAD_RTOL = 1e-4
_MAX_HALVINGS = 8
_CHUNK_ELEMENTS = 2_000_000


class Branch(enum.Enum):
    CO = "co"
    CTR = "ctr"

    @property
    def probe_sign(self) -> int:
        """Sign of the probe wavevector along the coupling beam."""
        return 1 if self is Branch.CO else -1


@dataclass(frozen=True)
class LadderConfig:
    """Ladder parameters.  Frequencies are ordinary Hz, not rad/s.

    ``gamma_p`` and ``gamma_2g`` are half widths (HWHM).  ``omega_p``,
    ``omega_c``, ``gamma_e`` and ``gamma_r`` are carried for provenance;
    the factorised line shape uses only the effective widths.
    """

    geometry: WaveGeometry = field(default_factory=WaveGeometry)
    delta_p0: float = 80e6
    gamma_p: float = 2.6e6
    gamma_2g: float = 1.5e6
    gamma_e: float = 5.2e6
    gamma_r: float = 1e4
    omega_p: float = 1e6
    omega_c: float = 5e6
    omega_rf: float = 0.0
    temperature: float = 300.0
    atomic_mass: float = CESIUM_MASS
    branch_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "branch_weights", tuple(float(w) for w in self.branch_weights))
        for name in ("gamma_p", "gamma_2g", "gamma_e", "gamma_r", "omega_p", "omega_c",
                     "temperature", "atomic_mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.omega_rf) and self.omega_rf >= 0):
            raise DomainError(f"omega_rf must be non-negative, got {self.omega_rf!r}")
        if not math.isfinite(self.delta_p0):
            raise DomainError("delta_p0 must be finite")
        w = self.branch_weights
        if len(w) != 2 or min(w) < 0 or not any(x > 0 for x in w) or not all(map(math.isfinite, w)):
            raise DomainError(f"branch_weights must be two non-negative numbers, not both zero: {w!r}")

    @property
    def sigma_v(self) -> float:
        """1-D thermal velocity spread sqrt(kT/m), m/s."""
        return math.sqrt(BOLTZMANN_K * self.temperature / self.atomic_mass)

    def weight(self, branch: Branch) -> float:
        return self.branch_weights[0 if branch is Branch.CO else 1]

    def with_omega_rf(self, omega_rf: float) -> "LadderConfig":
        return replace(self, omega_rf=omega_rf)

    def to_dict(self) -> dict:
        d = asdict(self)
        geometry = d.pop("geometry")
        return {
            "schema": LADDER_SCHEMA,
            "lambda_p_m": geometry["lambda_p"],
            "lambda_c_m": geometry["lambda_c"],
            **{f"{k}_hz": d[k] for k in ("delta_p0", "gamma_p", "gamma_2g", "gamma_e", "gamma_r",
                                         "omega_p", "omega_c", "omega_rf")},
            "temperature_k": d["temperature"],
            "atomic_mass_kg": d["atomic_mass"],
            "branch_weights": list(d["branch_weights"]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LadderConfig":
        if d.get("schema", LADDER_SCHEMA) != LADDER_SCHEMA:
            raise ParseError(f"field 'schema': expected {LADDER_SCHEMA!r}, got {d.get('schema')!r}")
        defaults = cls()
        kwargs = {}
        known = {"schema", "lambda_p_m", "lambda_c_m", "temperature_k", "atomic_mass_kg",
                 "branch_weights"}
        for key in ("delta_p0", "gamma_p", "gamma_2g", "gamma_e", "gamma_r", "omega_p",
                    "omega_c", "omega_rf"):
            known.add(f"{key}_hz")
            if f"{key}_hz" in d:
                kwargs[key] = _number(d, f"{key}_hz")
        unknown = set(d) - known
        if unknown:
            raise ParseError(f"unknown field(s) {sorted(unknown)!r}")
        if "temperature_k" in d:
            kwargs["temperature"] = _number(d, "temperature_k")
        if "atomic_mass_kg" in d:
            kwargs["atomic_mass"] = _number(d, "atomic_mass_kg")
        if "branch_weights" in d:
            w = d["branch_weights"]
            if not (isinstance(w, list) and len(w) == 2):
                raise ParseError("field 'branch_weights': expected a list of two numbers")
            kwargs["branch_weights"] = tuple(_number({"w": x}, "w", "branch_weights") for x in w)
        geometry = WaveGeometry(
            _number(d, "lambda_p_m") if "lambda_p_m" in d else defaults.geometry.lambda_p,
            _number(d, "lambda_c_m") if "lambda_c_m" in d else defaults.geometry.lambda_c,
        )
        return cls(geometry=geometry, **kwargs)


def _number(d, key, label=None):
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"field {label or key!r}: expected a number, got {value!r}")
    return float(value)


def load_ladder(path) -> LadderConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected a JSON object")
    try:
        return LadderConfig.from_dict(data)
    except DomainError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_ladder(config: LadderConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Doppler kinematics


def two_photon_wavenumber(geometry: WaveGeometry, branch: Branch) -> float:
    """K = k_p + k_c (co) or k_c - k_p (ctr), in 1/m."""
    return branch.probe_sign * geometry.k_p + geometry.k_c


def doppler_detunings(v, delta_p0, delta_c0, geometry: WaveGeometry, branch: Branch):
    """Atom-frame probe and coupling detunings (Hz) for velocity ``v`` (m/s)."""
    delta_c = delta_c0 - geometry.k_c * v
    delta_p = delta_p0 - branch.probe_sign * geometry.k_p * v
    return delta_p, delta_c


def two_photon_detuning(v, delta_p0, delta_c0, geometry: WaveGeometry, branch: Branch):
    return (delta_p0 + delta_c0) - two_photon_wavenumber(geometry, branch) * v


def probe_selected_velocity(delta_p0, geometry: WaveGeometry, branch: Branch):
    """Velocity at which the branch's one-photon detuning vanishes."""
    return branch.probe_sign * delta_p0 / geometry.k_p


def branch_positions(delta_p0, geometry: WaveGeometry):
    """(co, ctr) branch centres on the scanned coupling-detuning axis."""
    ratio = geometry.k_c / geometry.k_p
    return ratio * delta_p0, -ratio * delta_p0


def velocity_acceptance(gamma_2g, geometry: WaveGeometry, branch: Branch) -> float:
    """Velocity width gamma_2g / |K| admitted by the two-photon resonance."""
    if not gamma_2g > 0:
        raise DomainError("gamma_2g must be positive")
    K = two_photon_wavenumber(geometry, branch)
    if K == 0:
        raise DomainError(f"{branch.value} branch has K = 0 (equal wavelengths)")
    return gamma_2g / abs(K)


def resonant_velocity(delta_c0, delta_p0, geometry: WaveGeometry, branch: Branch):
    """Velocity in two-photon resonance at scan detuning ``delta_c0``.

    Its slope with respect to ``delta_c0`` is ``1 / K``.
    """
    K = two_photon_wavenumber(geometry, branch)
    if K == 0:
        raise DomainError(f"{branch.value} branch has K = 0 (equal wavelengths)")
    return (delta_p0 + delta_c0) / K


# --------------------------------------------------------------------------
# Line-shape kernels


def maxwell_boltzmann(v, sigma_v):
    """1-D Maxwell-Boltzmann density in s/m."""
    return np.exp(-0.5 * (v / sigma_v) ** 2) / (math.sqrt(2.0 * math.pi) * sigma_v)


def lorentzian(x, hwhm):
    """Area-normalised Lorentzian."""
    return (hwhm / math.pi) / (x * x + hwhm * hwhm)


def selection_factor(delta_p, gamma_p):
    """Peak-normalised one-photon selection factor."""
    return gamma_p * gamma_p / (delta_p * delta_p + gamma_p * gamma_p)


def at_doublet(delta, gamma_2g, omega_rf):
    """Two-photon kernel: one Lorentzian, or two half-weight ones at +-omega_rf/2.

    Normalised to unit area for every ``omega_rf``.
    """
    if omega_rf == 0:
        return lorentzian(delta, gamma_2g)
    half = 0.5 * omega_rf
    return 0.5 * (lorentzian(delta - half, gamma_2g) + lorentzian(delta + half, gamma_2g))


def eit_signal_at(v, delta_c0, config: LadderConfig, branch: Branch):
    """Velocity-resolved EIT signal density for one branch (non-negative)."""
    geometry = config.geometry
    delta_p, _ = doppler_detunings(v, config.delta_p0, delta_c0, geometry, branch)
    delta_2g = two_photon_detuning(v, config.delta_p0, delta_c0, geometry, branch)
    return (maxwell_boltzmann(v, config.sigma_v)
            * selection_factor(delta_p, config.gamma_p)
            * at_doublet(delta_2g, config.gamma_2g, config.omega_rf))


# --------------------------------------------------------------------------
# Spectrum synthesis


@dataclass(frozen=True, eq=False)
class Spectrum:
    delta_c0_grid: np.ndarray
    values: np.ndarray
    meta: LadderConfig | None = None

    def __post_init__(self):
        grid = np.asarray(self.delta_c0_grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise DomainError("grid and values must be 1-D arrays of equal length")
        if grid.size < 3:
            raise DomainError("a spectrum needs at least 3 samples")
        if not np.all(np.diff(grid) > 0):
            raise DomainError("delta_c0 grid must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DomainError("spectrum values must be finite and non-negative")
        object.__setattr__(self, "delta_c0_grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.delta_c0_grid.size

    def window(self, lo: float, hi: float) -> "Spectrum":
        sel = (self.delta_c0_grid >= lo) & (self.delta_c0_grid <= hi)
        return Spectrum(self.delta_c0_grid[sel], self.values[sel], self.meta)


def _branch_integral(config: LadderConfig, branch: Branch, grid: np.ndarray, rtol: float):
    """Trapezoid rule over +-5 sigma_v with step halving until converged.

    The integrand is analytic with poles no closer than the narrowest
    Lorentzian half width (in velocity), so the trapezoid error decays
    exponentially in width / step.
    """
    geometry = config.geometry
    K = two_photon_wavenumber(geometry, branch)
    widths = [config.gamma_p / geometry.k_p]
    if K != 0:
        widths.append(config.gamma_2g / abs(K))
    step = 0.5 * min(widths)
    v_max = VELOCITY_SPAN_SIGMAS * config.sigma_v
    # Odd node count so every halving keeps the previous nodes.
    n = 2 * int(math.ceil(v_max / step)) + 1
    v = np.linspace(-v_max, v_max, n)

    def trapezoid(vs):
        h = vs[1] - vs[0]
        w = np.full(vs.size, h)
        w[0] = w[-1] = 0.5 * h
        return _weighted_sum(config, branch, grid, vs, w)

    previous = trapezoid(v)
    for _ in range(_MAX_HALVINGS):
        v = np.linspace(-v_max, v_max, 2 * v.size - 1)
        current = trapezoid(v)
        scale = np.abs(current) + 1e-12 * np.max(np.abs(current), initial=0.0)
        err = np.abs(current - previous)
        rel = np.divide(err, scale, out=np.zeros_like(err), where=scale > 0)
        if np.all(rel <= rtol):
            return current
        previous = current
    worst = int(np.argmax(rel))
    raise QuadratureError(
        f"velocity quadrature did not converge at delta_c0={grid[worst]:.6g} Hz "
        f"(relative change {rel[worst]:.3g} > {rtol:g})",
        index=worst, delta_c0=float(grid[worst]), rel_error=float(rel[worst]),
    )


def _weighted_sum(config, branch, grid, v, weights):
    """sum_j w_j f(v_j, grid_i) for every grid point, in memory-bounded chunks."""
    geometry = config.geometry
    K = two_photon_wavenumber(geometry, branch)
    delta_p = config.delta_p0 - branch.probe_sign * geometry.k_p * v
    g = weights * maxwell_boltzmann(v, config.sigma_v) * selection_factor(delta_p, config.gamma_p)
    # Nodes where the velocity weight underflows contribute nothing.
    keep = g > 0
    g, Kv = g[keep], K * v[keep]
    out = np.empty(grid.size)
    rows = max(1, _CHUNK_ELEMENTS // max(1, g.size))
    for start in range(0, grid.size, rows):
        stop = min(grid.size, start + rows)
        delta_2g = (config.delta_p0 + grid[start:stop])[:, None] - Kv[None, :]
        out[start:stop] = at_doublet(delta_2g, config.gamma_2g, config.omega_rf) @ g
    return out


def synthesize_spectrum(config: LadderConfig, delta_c0_grid, rtol: float = QUAD_RTOL) -> Spectrum:
    """Doppler-averaged EIT/EIT-AT spectrum summed over both probe branches."""
    grid = np.asarray(delta_c0_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise DomainError("delta_c0 grid needs at least 3 samples")
    if not np.all(np.diff(grid) > 0):
        raise DomainError("delta_c0 grid must be strictly increasing")
    if not rtol <= 1e-4:
        raise DomainError("quadrature tolerance must be <= 1e-4")
    values = np.zeros(grid.size)
    for branch in Branch:
        w = config.weight(branch)
        if w > 0:
            values += w * _branch_integral(config, branch, grid, rtol)
    return Spectrum(grid, np.maximum(values, 0.0), config)


def branch_window_grid(config: LadderConfig, branch: Branch = Branch.CTR,
                       half_span: float = 50e6, step: float = 0.5e6) -> np.ndarray:
    """Uniform grid centred on one branch."""
    centre = branch_positions(config.delta_p0, config.geometry)[0 if branch is Branch.CO else 1]
    n = int(round(half_span / step))
    return centre + step * np.arange(-n, n + 1)


# --------------------------------------------------------------------------
# Persistence: CSV of (delta_c0_hz, value) with a JSON sidecar.


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".json") if path.suffix != ".json" else path


def save_spectrum(spectrum: Spectrum, path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["delta_c0_hz", "value"])
        for x, y in zip(spectrum.delta_c0_grid, spectrum.values):
            writer.writerow([repr(float(x)), repr(float(y))])
    meta = spectrum.meta.to_dict() if spectrum.meta is not None else None
    _sidecar(path).write_text(json.dumps({"ladder": meta}, indent=2) + "\n", encoding="utf-8")


def load_spectrum(path) -> Spectrum:
    path = Path(path)
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["delta_c0_hz", "value"]:
            raise ParseError(f"{path}: line 1: expected header 'delta_c0_hz,value'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    meta = None
    side = _sidecar(path)
    if side.exists():
        data = json.loads(side.read_text(encoding="utf-8"))
        if data.get("ladder") is not None:
            meta = LadderConfig.from_dict(data["ladder"])
    try:
        return Spectrum(np.array(xs), np.array(ys), meta)
    except DomainError as exc:
        raise ParseError(f"{path}: {exc}") from exc
