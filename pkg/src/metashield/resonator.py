"""Single Helmholtz-like resonator: resonance law, lumped impedance, notch.

The quarter-wave law ``f0 = v / (4 (h + r))`` is authoritative for where a
unit resonates. The lumped mass and compliance derived from the geometry
are rescaled by a common factor so the series-RLC zero crossing lands on
that frequency while their ratio (and hence the characteristic impedance
``sqrt(M / C)``) is the geometric one scaled by the same factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import defaults
from .errors import ArgumentError, InfeasibleDesignError
from .spectral import FrequencyResponse

END_CORRECTION = 1.7


@dataclass(frozen=True)
class AirMedium:
    """Propagation medium. ``sound_speed`` in m/s, ``density`` in kg/m^3."""

    sound_speed: float = 343.0
    density: float = 1.21

    def __post_init__(self):
        if not (self.sound_speed > 0 and self.density > 0):
            raise ArgumentError("sound_speed and density must be positive")


@dataclass(frozen=True)
class ResonatorUnit:
    """Cylindrical cavity of depth ``h`` behind a circular neck of radius ``r``.

    All lengths in meters. ``neck_length`` is the physical neck thickness
    before end correction.
    """

    h: float
    r: float = defaults.NECK_RADIUS
    cavity_radius: float = defaults.CAVITY_RADIUS
    q_factor: float = defaults.Q_FACTOR
    neck_length: float = defaults.NECK_LENGTH

    def __post_init__(self):
        for name in ("h", "r", "cavity_radius", "q_factor", "neck_length"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ArgumentError(f"{name} must be positive and finite, got {v}")
        if self.cavity_radius < self.r:
            raise ArgumentError("cavity_radius must be at least the neck radius")

    @property
    def cavity_volume(self) -> float:
        return np.pi * self.cavity_radius**2 * self.h


def resonance_frequency(unit: ResonatorUnit, air: AirMedium = AirMedium()) -> float:
    """Quarter-wave resonance ``v / (4 (h + r))`` in Hz."""
    return air.sound_speed / (4.0 * (unit.h + unit.r))


def design_unit_for(
    f_target: float, r: float = defaults.NECK_RADIUS, air: AirMedium = AirMedium(), **unit_kwargs
) -> ResonatorUnit:
    """Unit whose resonance is ``f_target``; extra fields go to :class:`ResonatorUnit`."""
    if not f_target > 0:
        raise ArgumentError("f_target must be positive")
    h = air.sound_speed / (4.0 * f_target) - r
    if h <= 0:
        raise InfeasibleDesignError(
            f"{f_target:.1f} Hz needs cavity depth {h * 1e3:.4f} mm with r = {r * 1e3} mm"
        )
    return ResonatorUnit(h=h, r=r, **unit_kwargs)


def lumped_elements(unit: ResonatorUnit, air: AirMedium = AirMedium()):
    """Rescaled acoustic mass, compliance and resistance ``(M, C, R)``.

    The raw neck mass and cavity compliance are both multiplied by
    ``f_lumped / f0`` so that ``1 / (2 pi sqrt(M C))`` equals the
    quarter-wave resonance.
    """
    rho, v = air.density, air.sound_speed
    mass = rho * (unit.neck_length + END_CORRECTION * unit.r) / (np.pi * unit.r**2)
    compliance = unit.cavity_volume / (rho * v * v)
    f0 = resonance_frequency(unit, air)
    f_lumped = 1.0 / (2.0 * np.pi * np.sqrt(mass * compliance))
    scale = f_lumped / f0
    mass *= scale
    compliance *= scale
    resistance = 2.0 * np.pi * f0 * mass / unit.q_factor
    return mass, compliance, resistance


def acoustic_mass(unit: ResonatorUnit, air: AirMedium = AirMedium()) -> float:
    return lumped_elements(unit, air)[0]


def unit_impedance(unit: ResonatorUnit, air: AirMedium, f):
    """Series RLC impedance ``R + j(wM - 1/(wC))`` at frequency ``f`` (Hz)."""
    fa = np.asarray(f, dtype=np.float64)
    if np.any(fa <= 0):
        raise ArgumentError("impedance needs f > 0")
    mass, compliance, resistance = lumped_elements(unit, air)
    w = 2.0 * np.pi * fa
    z = resistance + 1j * (w * mass - 1.0 / (w * compliance))
    return complex(z) if fa.ndim == 0 else z


def side_branch_transmission(z, z_ref: float):
    """Pressure transmission past a side branch of impedance ``z``."""
    return np.clip(np.abs(z) / np.abs(z + z_ref), 0.0, 1.0)


def single_unit_transmission(
    unit: ResonatorUnit, air: AirMedium, grid, z_ref: float = defaults.Z_REF
) -> FrequencyResponse:
    """Real transmission coefficient of one unit on ``grid``.

    Grid points at 0 Hz see an open-circuit branch and transmit fully.
    """
    f = np.asarray(grid, dtype=np.float64)
    t = np.ones_like(f)
    pos = f > 0
    t[pos] = side_branch_transmission(unit_impedance(unit, air, f[pos]), z_ref)
    return FrequencyResponse(f, t)
