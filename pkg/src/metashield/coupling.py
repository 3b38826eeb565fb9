"""Mutual-impedance coupling between resonator units in an array.

Neighbouring units load each other through a reactive mutual impedance
that grows as the gap between them shrinks. Its effect on the array's
transmission is modelled per unit: each unit's notch is broadened (lower
effective Q) and pulled to a lower frequency in proportion to how strong
the mutual term is compared with the unit's own impedance at its notch
edge.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import defaults
from .errors import ArgumentError, CalibrationError
from .resonator import (
    AirMedium,
    ResonatorUnit,
    lumped_elements,
    resonance_frequency,
    side_branch_transmission,
)
from .spectral import FrequencyResponse, make_grid

TC_COVERAGE_LEVEL = 0.2


class Arrangement(str, enum.Enum):
    LINEAR = "linear"
    CIRCULAR = "circular"


@dataclass(frozen=True)
class ArrayConfig:
    """Ordered units with an arrangement and an edge-to-edge ``spacing`` (m)."""

    units: tuple
    arrangement: Arrangement = Arrangement.LINEAR
    spacing: float = defaults.IADM_SPACING

    def __post_init__(self):
        units = tuple(self.units)
        if len(units) < 1:
            raise ArgumentError("an array needs at least one unit")
        if not all(isinstance(u, ResonatorUnit) for u in units):
            raise ArgumentError("units must be ResonatorUnit instances")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ArgumentError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "arrangement", Arrangement(self.arrangement))

    def __len__(self):
        return len(self.units)


@dataclass(frozen=True)
class CouplingModel:
    """Free constants of the coupling and transmission model.

    Attributes
    ----------
    alpha : float
        Coupling length in meters; ``alpha / spacing`` scales the mutual
        impedance relative to a unit's own mass reactance.
    z_ref : float
        Real reference impedance the side branches shunt (Pa s / m^3).
    q_broadening_gain : float
        How strongly the coupling ratio lowers a unit's effective Q.
    shift_gain : float
        How strongly the coupling ratio pulls a unit's resonance down.
    """

    alpha: float = defaults.COUPLING_ALPHA
    z_ref: float = defaults.Z_REF
    q_broadening_gain: float = defaults.Q_BROADENING_GAIN
    shift_gain: float = defaults.SHIFT_GAIN

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ArgumentError("alpha must be >= 0")
        if not self.z_ref > 0:
            raise ArgumentError("z_ref must be > 0")
        if not (self.q_broadening_gain >= 0 and self.shift_gain >= 0):
            raise ArgumentError("gains must be >= 0")

    def uncoupled(self) -> "CouplingModel":
        return replace(self, alpha=0.0)


def f_loss(n: int) -> float:
    """Circular-arrangement weakening factor ``(1/N) sum_m sin^2(pi m / N)``."""
    if int(n) != n or n < 1:
        raise ArgumentError(f"N must be a positive integer, got {n}")
    n = int(n)
    m = np.arange(1, n + 1)
    val = float(np.sum(np.sin(np.pi * m / n) ** 2) / n)
    # sin(pi) is ~1.2e-16 in floating point, not zero
    return 0.0 if val < 1e-15 else val


def _pair_mass(cfg: ArrayConfig, air: AirMedium) -> float:
    masses = [lumped_elements(u, air)[0] for u in cfg.units]
    return float(sum(math.sqrt(a * b) for a, b in zip(masses[:-1], masses[1:])))


def _arrangement_factor(cfg: ArrayConfig) -> float:
    if cfg.arrangement is Arrangement.CIRCULAR:
        return f_loss(len(cfg))
    return 1.0


def mutual_impedance(cfg: ArrayConfig, model: CouplingModel, f, air: AirMedium = AirMedium()):
    """Reactive mutual impedance ``j w (alpha/S) sum_adjacent sqrt(M_i M_j)``.

    Circular arrays are weakened by :func:`f_loss`. A single unit has no
    neighbour and gets zero.
    """
    fa = np.asarray(f, dtype=np.float64)
    if np.any(fa <= 0):
        raise ArgumentError("mutual impedance needs f > 0")
    scale = model.alpha / cfg.spacing * _pair_mass(cfg, air) * _arrangement_factor(cfg)
    z = 1j * 2.0 * np.pi * fa * scale
    return complex(z) if fa.ndim == 0 else z


def total_impedance(cfg: ArrayConfig, model: CouplingModel, f, air: AirMedium = AirMedium()):
    """Sum of unit impedances plus the mutual term."""
    from .resonator import unit_impedance

    z = mutual_impedance(cfg, model, f, air)
    for unit in cfg.units:
        z = z + unit_impedance(unit, air, f)
    return z


def _edge_impedance(resistance: float, z_ref: float) -> float:
    """|Z| of a branch at the frequency where its transmission is 0.5."""
    x2 = (0.25 * (resistance + z_ref) ** 2 - resistance**2) / 0.75
    return math.sqrt(resistance**2 + max(x2, 0.0))


@dataclass(frozen=True)
class EffectiveUnit:
    """Coupled notch parameters of one unit."""

    f0: float
    f_eff: float
    q: float
    q_eff: float
    resistance: float
    coupling_ratio: float


def effective_units(cfg: ArrayConfig, model: CouplingModel, air: AirMedium = AirMedium()):
    """Per-unit coupling ratio, effective Q and shifted resonance."""
    out = []
    for unit in cfg.units:
        _, _, resistance = lumped_elements(unit, air)
        f0 = resonance_frequency(unit, air)
        if model.alpha > 0 and len(cfg) > 1:
            z_mut = abs(mutual_impedance(cfg, model, f0, air))
            ratio = z_mut / _edge_impedance(resistance, model.z_ref)
        else:
            ratio = 0.0
        out.append(
            EffectiveUnit(
                f0=f0,
                f_eff=f0 / math.sqrt(1.0 + model.shift_gain * ratio),
                q=unit.q_factor,
                q_eff=unit.q_factor / (1.0 + model.q_broadening_gain * ratio),
                resistance=resistance,
                coupling_ratio=ratio,
            )
        )
    return out


def _notch(f, eu: EffectiveUnit, z_ref: float):
    x = eu.resistance * eu.q_eff * (f / eu.f_eff - eu.f_eff / f)
    return side_branch_transmission(eu.resistance + 1j * x, z_ref)


def transmission_values(cfg: ArrayConfig, model: CouplingModel, air: AirMedium, freqs) -> np.ndarray:
    """Array transmission magnitudes at ``freqs`` (0 Hz transmits fully)."""
    f = np.asarray(freqs, dtype=np.float64)
    t = np.ones_like(f)
    pos = f > 0
    fp = f[pos]
    tp = np.ones_like(fp)
    for eu in effective_units(cfg, model, air):
        tp *= _notch(fp, eu, model.z_ref)
    t[pos] = np.clip(tp, 0.0, 1.0)
    return t


def array_transmission(cfg: ArrayConfig, model: CouplingModel, air: AirMedium, grid) -> FrequencyResponse:
    """Real transmission coefficient of the whole array on ``grid``."""
    f = np.asarray(grid, dtype=np.float64)
    return FrequencyResponse(f, transmission_values(cfg, model, air, f))


def coupled_resonances(cfg: ArrayConfig, model: CouplingModel, air: AirMedium = AirMedium(), grid=None):
    """Frequencies of the local minima of the array transmission.

    At most ``N`` minima are returned (the deepest ones), in ascending order.
    The default grid spans half the lowest to 1.05 times the highest
    uncoupled resonance in roughly 1 Hz steps.
    """
    if grid is None:
        f0s = [resonance_frequency(u, air) for u in cfg.units]
        lo, hi = 0.5 * min(f0s), 1.05 * max(f0s)
        grid = make_grid(lo, hi, int(hi - lo) + 1)
    f = np.asarray(grid, dtype=np.float64)
    t = transmission_values(cfg, model, air, f)
    inner = np.arange(1, f.size - 1)
    is_min = (t[inner] < t[inner - 1]) & (t[inner] <= t[inner + 1])
    idx = inner[is_min]
    if idx.size > len(cfg):
        idx = idx[np.argsort(t[idx], kind="stable")[: len(cfg)]]
    return sorted(float(f[i]) for i in idx)


def contiguous_coverage(freqs, values, level: float = TC_COVERAGE_LEVEL):
    """Largest contiguous run of grid points with ``values <= level``.

    Returns ``(f_start, f_end)``; ``(nan, nan)`` when no point qualifies.
    """
    f = np.asarray(freqs, dtype=np.float64)
    ok = np.asarray(values) <= level
    if not ok.any():
        return (math.nan, math.nan)
    padded = np.concatenate(([False], ok, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[0::2], edges[1::2] - 1
    widths = f[ends] - f[starts]
    k = int(np.argmax(widths))
    return (float(f[starts[k]]), float(f[ends[k]]))


def coverage_width(freqs, values, level: float = TC_COVERAGE_LEVEL) -> float:
    lo, hi = contiguous_coverage(freqs, values, level)
    return 0.0 if math.isnan(lo) else hi - lo


def notch_bandwidth(unit: ResonatorUnit, air: AirMedium, z_ref: float, level: float = TC_COVERAGE_LEVEL) -> float:
    """Closed-form width (Hz) of the band where a lone unit transmits ``<= level``."""
    _, _, resistance = lumped_elements(unit, air)
    x2 = (level**2 * (resistance + z_ref) ** 2 - resistance**2) / (1.0 - level**2)
    if x2 <= 0:
        return 0.0
    f0 = resonance_frequency(unit, air)
    return f0 * math.sqrt(x2) / (resistance * unit.q_factor)


# --- calibration ---------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationTargets:
    """What the calibrated model must reproduce.

    The reference array is ``unit_heights`` at ``spacing`` in a linear
    row. ``expansion_min`` bounds from below the ratio of the coupled
    array's contiguous coverage to the summed single-unit notch widths.
    ``passband_min`` keeps the array transparent to the speech band.
    """

    unit_heights: tuple = defaults.IADM_HEIGHTS
    neck_radius: float = defaults.NECK_RADIUS
    cavity_radius: float = defaults.CAVITY_RADIUS
    neck_length: float = defaults.NECK_LENGTH
    spacing: float = defaults.IADM_SPACING
    unit_bandwidth: tuple = (1000.0, 2000.0)
    band: tuple = (16000.0, 40000.0)
    band_points: int = 2401
    band_tc_max: float = 0.15
    expansion_min: float = 4.0
    passband: tuple = (100.0, 2000.0)
    passband_min: float = 0.85
    shift_gain: float = defaults.SHIFT_GAIN
    q_grid: tuple = (20.0, 30.0, 50.0, 80.0)
    z_ref_grid: tuple = (3.0e6, 4.0e6, 5.0e6, 6.0e6, 7.0e6, 8.0e6)
    gain_grid: tuple = (0.5, 1.0, 2.0)
    log_alpha_bounds: tuple = (-8.0, -2.0)
    golden_iterations: int = 48


@dataclass(frozen=True)
class CalibrationResult:
    model: CouplingModel
    q_factor: float
    residuals: dict = field(default_factory=dict)


def _units_for(targets: CalibrationTargets, q: float):
    return tuple(
        ResonatorUnit(
            h=h,
            r=targets.neck_radius,
            cavity_radius=targets.cavity_radius,
            q_factor=q,
            neck_length=targets.neck_length,
        )
        for h in targets.unit_heights
    )


class _Evaluator:
    def __init__(self, targets: CalibrationTargets, air: AirMedium):
        self.targets = targets
        self.air = air
        self.band_grid = make_grid(*targets.band, targets.band_points)
        self.pass_grid = make_grid(*targets.passband, 191)
        lo = max(1.0, 0.2 * targets.band[0])
        hi = 1.5 * targets.band[1]
        self.wide_grid = make_grid(lo, hi, int((hi - lo) / 10.0) + 1)

    def residuals(self, units, model: CouplingModel) -> dict:
        t = self.targets
        cfg = ArrayConfig(units, Arrangement.LINEAR, t.spacing)
        widths = [notch_bandwidth(u, self.air, model.z_ref) for u in units]
        band_max = float(transmission_values(cfg, model, self.air, self.band_grid).max())
        pass_min = float(transmission_values(cfg, model, self.air, self.pass_grid).min())
        coverage = coverage_width(self.wide_grid, transmission_values(cfg, model, self.air, self.wide_grid))
        expansion = coverage / sum(widths) if sum(widths) > 0 else 0.0
        bw_lo, bw_hi = t.unit_bandwidth
        return {
            "unit_bandwidth_low": (bw_lo - min(widths)) / bw_lo,
            "unit_bandwidth_high": (max(widths) - bw_hi) / bw_hi,
            "band_tc_max": band_max - t.band_tc_max,
            "expansion": (t.expansion_min - expansion) / t.expansion_min,
            "passband_min": t.passband_min - pass_min,
            "_band_max": band_max,
        }

    @staticmethod
    def violation(res: dict) -> float:
        return sum(max(v, 0.0) for k, v in res.items() if not k.startswith("_"))


def _golden_min(fun, lo: float, hi: float, iterations: int):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def calibrate(targets: CalibrationTargets = CalibrationTargets(), air: AirMedium = AirMedium()) -> CalibrationResult:
    """Fit ``(q_factor, z_ref, q_broadening_gain, alpha)`` to ``targets``.

    A coarse grid over Q, reference impedance and broadening gain is
    scanned in a fixed order. For each grid point whose single-unit notch
    widths meet the bandwidth target, a golden-section search over
    ``log10(alpha)`` minimizes the worst in-band transmission plus a heavy
    penalty on any violated target. The feasible candidate with the lowest
    in-band maximum wins; earlier grid points win ties.

    Raises
    ------
    CalibrationError
        If no candidate meets every target. The residuals of the least
        violating candidate are attached.
    """
    ev = _Evaluator(targets, air)
    penalty = 100.0
    best_feasible = None
    best_any = None
    for q in targets.q_grid:
        units = _units_for(targets, q)
        for z_ref in targets.z_ref_grid:
            for gain in targets.gain_grid:
                def make(log_alpha):
                    return CouplingModel(10.0**log_alpha, z_ref, gain, targets.shift_gain)

                def objective(log_alpha):
                    res = ev.residuals(units, make(log_alpha))
                    return res["_band_max"] + penalty * ev.violation(res)

                log_alpha, _ = _golden_min(objective, *targets.log_alpha_bounds, targets.golden_iterations)
                model = make(log_alpha)
                res = ev.residuals(units, model)
                viol = ev.violation(res)
                cand = (viol, res["_band_max"], model, q, res)
                if best_any is None or (viol, res["_band_max"]) < best_any[:2]:
                    best_any = cand
                if viol == 0.0 and (best_feasible is None or res["_band_max"] < best_feasible[1]):
                    best_feasible = cand
    if best_feasible is None:
        residuals = {k: v for k, v in best_any[4].items() if not k.startswith("_")}
        raise CalibrationError("no calibration point satisfies every target", residuals)
    _, _, model, q, res = best_feasible
    return CalibrationResult(model, q, {k: v for k, v in res.items() if not k.startswith("_")})


def reference_array(
    model_q: float = defaults.Q_FACTOR,
    arrangement: Arrangement = Arrangement.LINEAR,
    spacing: float = defaults.IADM_SPACING,
) -> ArrayConfig:
    """The three-unit reference array (2, 3.2 and 4.8 mm cavities)."""
    units = tuple(ResonatorUnit(h=h, q_factor=model_q) for h in defaults.IADM_HEIGHTS)
    return ArrayConfig(units, arrangement, spacing)
