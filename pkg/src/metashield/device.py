"""Enclosure presets and the composite device response.

A device is the resonator array, the coiled amplifier and the inlet channel
in cascade. The channel is a two-path interferer: the direct path plus a
path longer by ``channel_delta_L`` mixed in with weight ``channel_mix``.
Inside an enclosure the same extra length also extends the amplifier's
acoustic path, which lowers its quarter-wave resonance; together with a
gain adjustment this is what moves the in-enclosure peak away from the bare
amplifier's.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from . import defaults
from .amplifier import CoiledUnit, lorentzian_gain
from .coupling import ArrayConfig, CouplingModel, array_transmission, reference_array
from .errors import ArgumentError, FitError
from .resonator import AirMedium
from .spectral import FrequencyResponse, compose, evaluate_response, make_grid

PASSBAND = (100.0, 2000.0)
PASSBAND_LIMITS = (0.9, 1.1)
STOPBAND = (16000.0, 40000.0)
STOPBAND_MAX = 0.15


class EnclosureKind(str, enum.Enum):
    MOBILE = "mobile"
    SPEAKER = "speaker"


@dataclass(frozen=True)
class EnclosurePreset:
    """Outer box, inlet channel and amplifier targets of one enclosure.

    Lengths in meters. ``gain_adjust`` multiplies the amplifier's peak gain
    inside the enclosure; it is set by :func:`fit_channel`.
    """

    kind: EnclosureKind
    length: float
    width: float
    height: float
    channel_width: float = 4.0e-3
    channel_height: float = 2.0e-3
    wall: float = 5.0e-3
    amp_center_target: float = 2800.0
    amp_gain_target: float = 78.8
    channel_delta_L: float = 0.0
    channel_mix: float = 0.0
    gain_adjust: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EnclosureKind(self.kind))
        dims = (self.length, self.width, self.height, self.channel_width, self.channel_height, self.wall)
        if not all(np.isfinite(d) and d > 0 for d in dims):
            raise ArgumentError("enclosure dimensions must be positive")
        if not self.wall < min(self.length, self.width, self.height) / 2:
            raise ArgumentError("wall must be thinner than half the smallest outer dimension")
        if not 0.0 <= self.channel_mix <= 1.0:
            raise ArgumentError("channel_mix must lie in [0, 1]")
        if not (self.channel_delta_L >= 0 and self.gain_adjust > 0):
            raise ArgumentError("channel_delta_L must be >= 0 and gain_adjust > 0")
        if not (self.amp_center_target > 0 and self.amp_gain_target >= 1):
            raise ArgumentError("amplifier targets must be positive with gain >= 1")


MOBILE = EnclosurePreset(
    EnclosureKind.MOBILE,
    40.0e-3,
    25.0e-3,
    15.0e-3,
    amp_center_target=2800.0,
    amp_gain_target=78.8,
    channel_delta_L=defaults.MOBILE_DELTA_L,
    channel_mix=defaults.MOBILE_MIX,
    gain_adjust=defaults.MOBILE_GAIN_ADJUST,
)

# no published numbers exist for the speaker build; targets are placeholders
SPEAKER = EnclosurePreset(
    EnclosureKind.SPEAKER,
    25.0e-3,
    20.0e-3,
    10.0e-3,
    wall=3.0e-3,
    amp_center_target=2900.0,
    amp_gain_target=45.0,
    channel_delta_L=defaults.SPEAKER_DELTA_L,
    channel_mix=defaults.SPEAKER_MIX,
    gain_adjust=defaults.SPEAKER_GAIN_ADJUST,
)

PRESETS = {EnclosureKind.MOBILE: MOBILE, EnclosureKind.SPEAKER: SPEAKER}


def preset(kind) -> EnclosurePreset:
    return PRESETS[EnclosureKind(kind)]


def channel_response(preset: EnclosurePreset, grid, air: AirMedium = AirMedium()) -> FrequencyResponse:
    """Two-path interference ``(1 + a exp(-j 2 pi f dL / c)) / (1 + a)``."""
    f = np.asarray(grid, dtype=np.float64)
    a = preset.channel_mix
    phase = 2.0 * np.pi * f * preset.channel_delta_L / air.sound_speed
    return FrequencyResponse(f, (1.0 + a * np.exp(-1j * phase)) / (1.0 + a))


def enclosed_resonance(preset: EnclosurePreset, coiled: CoiledUnit, air: AirMedium = AirMedium()) -> float:
    """Amplifier resonance with the channel's extra length added to the coil."""
    return air.sound_speed / (4.0 * (coiled.L_coiled + preset.channel_delta_L))


def enclosed_gain_spectrum(
    preset: EnclosurePreset, coiled: CoiledUnit, grid, air: AirMedium = AirMedium()
) -> FrequencyResponse:
    """Amplifier gain as mounted in ``preset``."""
    f = np.asarray(grid, dtype=np.float64)
    peak = max(1.0, coiled.peak_gain * preset.gain_adjust)
    g = lorentzian_gain(f, enclosed_resonance(preset, coiled, air), peak, coiled.q_amp)
    return FrequencyResponse(f, g.astype(np.complex128))


def device_response(
    preset: EnclosurePreset,
    array_T: FrequencyResponse,
    amp_H: FrequencyResponse,
    grid=None,
    air: AirMedium = AirMedium(),
) -> FrequencyResponse:
    """Cascade ``array_T * (amp_H * channel)`` on the union of all grids.

    ``grid`` is where the channel is sampled; it defaults to the union of
    the two input grids.
    """
    if grid is None:
        grid = np.union1d(array_T.freqs, amp_H.freqs)
    return compose(array_T, compose(amp_H, channel_response(preset, grid, air)))


def response_grid(f_max: float, amp_center: float | None = None, step: float = 5.0, fine_step: float = 0.25):
    """Grid from 0 Hz to ``f_max`` with a refined region around the amplifier peak."""
    n = int(math.ceil(f_max / step)) + 1
    grid = make_grid(0.0, f_max, n)
    if amp_center is not None:
        lo, hi = max(0.0, amp_center - 1500.0), min(f_max, amp_center + 1500.0)
        grid = np.union1d(grid, make_grid(lo, hi, int((hi - lo) / fine_step) + 1))
    return grid


def build_device(
    preset: EnclosurePreset,
    cfg: ArrayConfig | None = None,
    model: CouplingModel | None = None,
    coiled: CoiledUnit | None = None,
    f_max: float = 50000.0,
    air: AirMedium = AirMedium(),
) -> FrequencyResponse:
    """Full device response of ``preset`` with the default array and amplifier."""
    cfg = reference_array() if cfg is None else cfg
    model = CouplingModel() if model is None else model
    coiled = CoiledUnit() if coiled is None else coiled
    grid = response_grid(f_max, enclosed_resonance(preset, coiled, air))
    t = array_transmission(cfg, model, air, grid)
    amp = enclosed_gain_spectrum(preset, coiled, grid, air)
    return device_response(preset, t, amp, grid, air)


def _peak(resp_fn, center: float, span: float = 600.0, step: float = 0.25):
    f = make_grid(max(1.0, center - span), center + span, int(2 * span / step) + 1)
    mag = np.abs(resp_fn(f))
    i = int(np.argmax(mag))
    if 0 < i < f.size - 1:
        # parabolic refinement of the discrete maximum
        y0, y1, y2 = mag[i - 1], mag[i], mag[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            shift = 0.5 * (y0 - y2) / denom
            return float(f[i] + shift * step), float(y1 - 0.25 * (y0 - y2) * shift)
    return float(f[i]), float(mag[i])


def composite_peak(
    preset: EnclosurePreset,
    coiled: CoiledUnit,
    array_T: FrequencyResponse | None = None,
    air: AirMedium = AirMedium(),
):
    """``(frequency, gain)`` of the largest composite magnitude near the amplifier."""

    def fn(f):
        h = enclosed_gain_spectrum(preset, coiled, f, air).values * channel_response(preset, f, air).values
        if array_T is not None:
            h = h * evaluate_response(array_T, f)
        return h

    return _peak(fn, enclosed_resonance(preset, coiled, air))


def _band_ok(preset, coiled, array_T, air) -> bool:
    lo, hi = PASSBAND_LIMITS
    f = make_grid(*PASSBAND, 1901)
    h = enclosed_gain_spectrum(preset, coiled, f, air).values * channel_response(preset, f, air).values
    if array_T is not None:
        h = h * evaluate_response(array_T, f)
    mag = np.abs(h)
    # floor over the whole speech band, ceiling where the Lorentzian tail has died out
    if mag.min() < lo or mag[np.searchsorted(f, 1000.0)] > hi:
        return False
    if array_T is not None:
        fs = make_grid(*STOPBAND, 2401)
        hs = (
            enclosed_gain_spectrum(preset, coiled, fs, air).values
            * channel_response(preset, fs, air).values
            * evaluate_response(array_T, fs)
        )
        if np.abs(hs).max() > STOPBAND_MAX:
            return False
    return True


def fit_channel(
    preset: EnclosurePreset,
    coiled: CoiledUnit = CoiledUnit(),
    array_T: FrequencyResponse | None = None,
    air: AirMedium = AirMedium(),
    mix_grid=tuple(np.round(np.linspace(1.0, 0.0, 21), 2)),
    tol_hz: float = 0.05,
) -> EnclosurePreset:
    """Fit ``(channel_delta_L, channel_mix, gain_adjust)`` to the preset's targets.

    For each mix value in ``mix_grid`` (in order) the extra path length is
    found by bisection so the composite peak sits on the target frequency,
    and the gain adjustment is solved so the peak value equals the target
    gain. The first mix value whose composite also keeps the speech band
    above the lower ``PASSBAND_LIMITS`` value, stays under the upper one at
    1 kHz (and, when ``array_T`` is given, the
    stopband under ``STOPBAND_MAX``) is returned.

    When ``array_T`` is given the targets refer to the full device cascade,
    otherwise to amplifier and channel alone.

    Raises
    ------
    FitError
        If no mix value satisfies every condition.
    """
    target_f, target_g = preset.amp_center_target, preset.amp_gain_target
    failures = []
    for mix in mix_grid:
        p = replace(preset, channel_mix=float(mix), channel_delta_L=0.0, gain_adjust=1.0)
        try:
            for _ in range(4):
                p = _fit_delta(p, coiled, array_T, air, target_f, tol_hz)
                p = _fit_gain(p, coiled, array_T, air, target_g)
        except FitError as exc:
            failures.append(f"mix={mix}: {exc}")
            continue
        f_pk, g_pk = composite_peak(p, coiled, array_T, air)
        if abs(f_pk - target_f) > 50.0 or abs(g_pk / target_g - 1.0) > 0.05:
            failures.append(f"mix={mix}: peak {f_pk:.1f} Hz / {g_pk:.2f}")
            continue
        if _band_ok(p, coiled, array_T, air):
            return p
        failures.append(f"mix={mix}: band limits violated")
    raise FitError("no channel parameters reach the targets; " + "; ".join(failures[-3:]))


def _fit_delta(p, coiled, array_T, air, target_f, tol_hz):
    def peak_at(dl):
        return composite_peak(replace(p, channel_delta_L=dl), coiled, array_T, air)[0]

    lo, hi = 0.0, coiled.L_coiled
    f_lo = peak_at(lo)
    if f_lo < target_f - 50.0:
        raise FitError(f"peak {f_lo:.1f} Hz already below {target_f} Hz without extra path")
    if peak_at(hi) > target_f:
        raise FitError("target frequency needs more than a doubled path")
    if f_lo <= target_f:
        return replace(p, channel_delta_L=0.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if peak_at(mid) > target_f:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return replace(p, channel_delta_L=0.5 * (lo + hi))


def _fit_gain(p, coiled, array_T, air, target_g):
    def excess(adj):
        return composite_peak(replace(p, gain_adjust=adj), coiled, array_T, air)[1] - target_g

    lo, hi = 1.0 / coiled.peak_gain, 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e4:
            raise FitError("gain target unreachable")
    if excess(lo) > 0:
        raise FitError("gain target below the unamplified composite")
    adj = brentq(excess, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=200)
    return replace(p, gain_adjust=float(adj))


def fit_presets(
    cfg: ArrayConfig | None = None,
    model: CouplingModel | None = None,
    coiled: CoiledUnit | None = None,
    air: AirMedium = AirMedium(),
) -> dict:
    """Refit both built-in presets against the full device cascade."""
    cfg = reference_array() if cfg is None else cfg
    model = CouplingModel() if model is None else model
    coiled = CoiledUnit() if coiled is None else coiled
    out = {}
    for kind, base in PRESETS.items():
        grid = response_grid(50000.0, base.amp_center_target)
        t = array_transmission(cfg, model, air, grid)
        out[kind] = fit_channel(base, coiled, t, air)
    return out


def export_geometry(preset: EnclosurePreset, cfg: ArrayConfig, coiled: CoiledUnit, path, spacing: float | None = None) -> dict:
    """Write the enclosure solid as STL with a JSON sidecar.

    See :func:`metashield.geometry.export_geometry`.
    """
    from .geometry import export_geometry as _export

    return _export(preset, cfg, coiled, path, spacing)
