"""Coiled-space amplifier: quarter-wave folded channel with a resonant gain peak.

The folded channel resonates at ``c / (4 L_coiled)``. Its peak pressure gain
follows a raw expression that is linear in the refractive index
``L_coiled / L_straight`` and falls with the square of the wavelength; the
raw number is mapped to a physical gain by one constant chosen so that the
reference unit (28.5 mm path in a 15 mm body) amplifies 37.6 times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import defaults
from .errors import ArgumentError
from .resonator import AirMedium
from .spectral import FrequencyResponse

REFERENCE_PATH = defaults.AADM_PATH
REFERENCE_STRAIGHT = defaults.AADM_LENGTH
REFERENCE_GAIN = defaults.AADM_PEAK_GAIN


@dataclass(frozen=True)
class CoiledUnit:
    """Coiled amplifier geometry (meters) and resonance shape.

    ``L_straight`` is the unfolded reference path; by default it equals the
    body length ``l``.
    """

    l: float = defaults.AADM_LENGTH
    k: float = defaults.AADM_WIDTH
    d: float = defaults.AADM_HEIGHT
    g: float = defaults.AADM_CHANNEL
    L_coiled: float = defaults.AADM_PATH
    L_straight: float = defaults.AADM_LENGTH
    q_amp: float = defaults.Q_AMP
    peak_gain: float = defaults.AADM_PEAK_GAIN

    def __post_init__(self):
        for name in ("l", "k", "d", "g", "L_coiled", "q_amp"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ArgumentError(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.L_straight) and self.L_straight >= 0):
            raise ArgumentError("L_straight must be non-negative")
        if self.L_straight > 0 and self.L_coiled < self.L_straight:
            raise ArgumentError("the coiled path cannot be shorter than the straight path")
        if not self.peak_gain >= 1:
            raise ArgumentError("peak_gain must be >= 1")


def coiled_resonance(unit: CoiledUnit, air: AirMedium = AirMedium()) -> float:
    """Quarter-wave resonance ``c / (4 L_coiled)`` in Hz."""
    return air.sound_speed / (4.0 * unit.L_coiled)


def refractive_index(unit: CoiledUnit) -> float:
    """Path-length ratio ``L_coiled / L_straight``."""
    if unit.L_straight == 0:
        raise ArgumentError("L_straight is zero; refractive index undefined")
    return unit.L_coiled / unit.L_straight


def raw_amplification(unit: CoiledUnit, air: AirMedium = AirMedium()) -> float:
    """Uncalibrated gain ``(n / lam) sqrt(2 rho c^2 / lam^2)`` in SI units."""
    lam = air.sound_speed / coiled_resonance(unit, air)
    c = air.sound_speed
    return refractive_index(unit) / lam * math.sqrt(2.0 * air.density * c * c / lam**2)


def gain_calibration(air: AirMedium = AirMedium()) -> float:
    """Constant mapping raw gain to physical gain, anchored on the reference unit."""
    ref = CoiledUnit(L_coiled=REFERENCE_PATH, L_straight=REFERENCE_STRAIGHT)
    return REFERENCE_GAIN / raw_amplification(ref, air)


def amplification_factor(unit: CoiledUnit, air: AirMedium = AirMedium(), calibration: float | None = None) -> float:
    """Calibrated peak pressure gain of ``unit``."""
    kappa = gain_calibration(air) if calibration is None else calibration
    return kappa * raw_amplification(unit, air)


def design_coiled_for(f_target: float, air: AirMedium = AirMedium(), **overrides) -> CoiledUnit:
    """Amplifier whose quarter-wave resonance is ``f_target``.

    The peak gain is the calibrated amplification of the resulting path
    (floored at 1). A path shorter than the body needs no folding, so the
    straight reference path is shortened to match (index 1).
    """
    if not f_target > 0:
        raise ArgumentError("f_target must be positive")
    path = air.sound_speed / (4.0 * f_target)
    if "L_straight" not in overrides:
        overrides["L_straight"] = min(overrides.get("l", defaults.AADM_LENGTH), path)
    unit = CoiledUnit(L_coiled=path, **overrides)
    if "peak_gain" in overrides:
        return unit
    return replace(unit, peak_gain=max(1.0, amplification_factor(unit, air)))


def lorentzian_gain(f, center: float, peak_gain: float, q: float):
    """Unity baseline plus a Lorentzian bump of height ``peak_gain - 1``."""
    half_width = center / (2.0 * q)
    x = (np.asarray(f, dtype=np.float64) - center) / half_width
    return 1.0 + (peak_gain - 1.0) / (1.0 + x * x)


def gain_spectrum(unit: CoiledUnit, grid, air: AirMedium = AirMedium()) -> FrequencyResponse:
    """Zero-phase gain of the amplifier on ``grid``."""
    f = np.asarray(grid, dtype=np.float64)
    g = lorentzian_gain(f, coiled_resonance(unit, air), unit.peak_gain, unit.q_amp)
    return FrequencyResponse(f, g.astype(np.complex128))
