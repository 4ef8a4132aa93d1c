"""Physical constants, wave geometry and near-field region classification.

All detunings and Doppler shifts in this package are ordinary frequencies
(Hz): an atom moving at ``v`` sees a shift of ``v / lambda``.  Wavenumbers
are therefore stored as ``1 / lambda`` rather than ``2 pi / lambda``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError

# SI 2019 exact values.
PLANCK_H = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m/s
BOLTZMANN_K = 1.380649e-23  # J/K
# Atomic unit of electric dipole moment, e * a0 (CODATA 2018).
E_A0 = 8.4783536255e-30  # C m

CESIUM_MASS = 2.2069e-25  # kg, 133Cs
# 44D5/2 -> 45P3/2 dipole moment.  Configuration default only; not a
# measured value.
DEFAULT_DIPOLE = 1000.0 * E_A0

MW_FREQUENCY = 8.556e9  # Hz


@dataclass(frozen=True)
class PhysConstants:
    h: float = PLANCK_H
    c: float = SPEED_OF_LIGHT
    e_a0: float = E_A0


CONSTANTS = PhysConstants()


@dataclass(frozen=True)
class WaveGeometry:
    """Probe/coupling wavelengths of the ladder, in metres."""

    lambda_p: float = 852e-9
    lambda_c: float = 510e-9

    def __post_init__(self):
        if not (self.lambda_p > 0 and self.lambda_c > 0):
            raise DomainError("wavelengths must be positive")

    @property
    def k_p(self) -> float:
        return 1.0 / self.lambda_p

    @property
    def k_c(self) -> float:
        return 1.0 / self.lambda_c


@dataclass(frozen=True)
class AntennaAperture:
    """Rectangular aperture; ``D`` is its diagonal."""

    width: float
    height: float
    frequency: float

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise DomainError("aperture dimensions must be non-negative")
        if not self.frequency > 0:
            raise DomainError("frequency must be positive")

    @classmethod
    def from_wavelength(cls, width: float, height: float, wavelength: float) -> "AntennaAperture":
        if not wavelength > 0:
            raise DomainError("wavelength must be positive")
        return cls(width, height, SPEED_OF_LIGHT / wavelength)

    @property
    def D(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency


class FieldRegion(enum.IntEnum):
    REACTIVE_NEAR_FIELD = 0
    RADIATING_NEAR_FIELD = 1
    FAR_FIELD = 2

    @property
    def short(self) -> str:
        return ("RNF", "RDNF", "FF")[self.value]


def rdnf_outer_bound(aperture: AntennaAperture) -> float:
    """Outer edge 2 D^2 / lambda of the radiating near field (m)."""
    lam = aperture.wavelength
    if not lam > 0:
        raise DomainError("wavelength must be positive")
    return 2.0 * aperture.D ** 2 / lam


def classify_region(z: float, aperture: AntennaAperture) -> FieldRegion:
    """Classify an axial distance ``z`` (m) from the aperture.

    Intervals are half-open with each boundary belonging to the farther
    region, so ``z == lambda`` is radiating near field.
    """
    if not z > 0:
        raise DomainError(f"axial distance must be positive, got {z!r}")
    if aperture.D == 0:
        raise DomainError("degenerate aperture (D = 0)")
    lam = aperture.wavelength
    if z < lam:
        return FieldRegion.REACTIVE_NEAR_FIELD
    if z < rdnf_outer_bound(aperture):
        return FieldRegion.RADIATING_NEAR_FIELD
    return FieldRegion.FAR_FIELD


def _check_dipole(dipole):
    if not dipole > 0:
        raise DomainError(f"dipole moment must be positive, got {dipole!r}")


def at_splitting_to_field(delta_f: float, dipole: float = DEFAULT_DIPOLE) -> float:
    """Field magnitude |E| = h * delta_f / dipole, in V/m."""
    _check_dipole(dipole)
    if delta_f < 0:
        raise DomainError(f"AT splitting must be non-negative, got {delta_f!r}")
    # scale by the ratio so tiny splittings do not underflow on the way
    return delta_f * (PLANCK_H / dipole)


def field_to_at_splitting(field: float, dipole: float = DEFAULT_DIPOLE) -> float:
    """AT splitting in Hz produced by a field magnitude ``field`` (V/m)."""
    _check_dipole(dipole)
    if field < 0:
        raise DomainError(f"field magnitude must be non-negative, got {field!r}")
    return field * (dipole / PLANCK_H)
