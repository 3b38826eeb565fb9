"""Design search: band coverage by greedy unit placement, arrangement
comparison and coiled-amplifier sizing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .amplifier import CoiledUnit, design_coiled_for
from .coupling import (
    Arrangement,
    ArrayConfig,
    CouplingModel,
    TC_COVERAGE_LEVEL,
    contiguous_coverage,
    transmission_values,
)
from .errors import ArgumentError
from .resonator import AirMedium, ResonatorUnit
from .spectral import make_grid


@dataclass(frozen=True)
class DesignProblem:
    """Band-coverage design request.

    ``spacing_choices`` lists candidate gaps; each is tried and the one
    reaching the target with the fewest units (then the lowest worst-case
    transmission) is kept. Cavity depths come from a grid from ``h_min``
    to ``h_max`` in ``h_step`` increments.
    """

    band: tuple = (16000.0, 40000.0)
    tc_target: float = 0.15
    max_units: int = 30
    r: float = defaults.NECK_RADIUS
    spacing_choices: tuple = (defaults.IADM_SPACING,)
    arrangement: Arrangement = Arrangement.LINEAR
    coupling_enabled: bool = True
    q_factor: float = defaults.Q_FACTOR
    cavity_radius: float = defaults.CAVITY_RADIUS
    h_min: float = 0.1e-3
    h_max: float = 30.0e-3
    h_step: float = 0.1e-3
    grid_points: int = 2401

    def __post_init__(self):
        lo, hi = self.band
        if not (0 < lo < hi):
            raise ArgumentError(f"band must satisfy 0 < lo < hi, got {self.band}")
        if not (0 < self.tc_target < 1):
            raise ArgumentError("tc_target must lie in (0, 1)")
        if int(self.max_units) != self.max_units or self.max_units < 1:
            raise ArgumentError("max_units must be a positive integer")
        if not self.spacing_choices or any(s <= 0 for s in self.spacing_choices):
            raise ArgumentError("spacing choices must be positive")
        if not (0 < self.h_min <= self.h_max and self.h_step > 0):
            raise ArgumentError("invalid height grid")
        object.__setattr__(self, "arrangement", Arrangement(self.arrangement))

    def heights(self) -> np.ndarray:
        n = int(round((self.h_max - self.h_min) / self.h_step)) + 1
        # integer steps avoid drift; rounding to 1e-9 m keeps values tidy
        return np.round(self.h_min + self.h_step * np.arange(n), 9)


@dataclass(frozen=True)
class DesignResult:
    config: ArrayConfig
    achieved_max_tc: float
    units_used: int
    target_met: bool
    history: tuple = field(default=())


def _greedy(problem: DesignProblem, model: CouplingModel, air: AirMedium, spacing: float) -> DesignResult:
    grid = make_grid(problem.band[0], problem.band[1], problem.grid_points)
    heights = problem.heights()
    candidates = [
        ResonatorUnit(h=float(h), r=problem.r, cavity_radius=problem.cavity_radius, q_factor=problem.q_factor)
        for h in heights
    ]
    eff_model = model if problem.coupling_enabled else model.uncoupled()
    chosen: list[int] = []
    history = []
    best_tc = math.inf
    running = np.ones_like(grid)
    single = None
    if not problem.coupling_enabled:
        # without coupling every unit acts alone, so cache its notch once
        single = np.empty((len(candidates), grid.size))
        for i, unit in enumerate(candidates):
            cfg = ArrayConfig((unit,), problem.arrangement, spacing)
            single[i] = transmission_values(cfg, eff_model, air, grid)

    for _ in range(int(problem.max_units)):
        step_best = (math.inf, -1)
        for i in range(len(candidates)):
            if i in chosen:
                continue
            if single is not None:
                tc = float(np.max(running * single[i]))
            else:
                idx = sorted(chosen + [i])
                cfg = ArrayConfig(tuple(candidates[j] for j in idx), problem.arrangement, spacing)
                tc = float(np.max(transmission_values(cfg, eff_model, air, grid)))
            if tc < step_best[0]:
                step_best = (tc, i)
        if step_best[1] < 0:
            break
        chosen.append(step_best[1])
        if single is not None:
            running = running * single[step_best[1]]
        best_tc = step_best[0]
        history.append((float(heights[step_best[1]]), best_tc))
        if best_tc <= problem.tc_target:
            break

    units = tuple(candidates[j] for j in sorted(chosen))
    cfg = ArrayConfig(units, problem.arrangement, spacing)
    achieved = float(np.max(transmission_values(cfg, eff_model, air, grid)))
    return DesignResult(cfg, achieved, len(units), achieved <= problem.tc_target, tuple(history))


def cover_band(problem: DesignProblem, model: CouplingModel, air: AirMedium = AirMedium()) -> DesignResult:
    """Greedily add units until the band's worst transmission meets the target.

    Each step adds the depth from the height grid that yields the lowest
    worst-case transmission over the band; ties go to the shallower depth.
    Units are kept ordered by depth. An unreachable target is reported via
    ``target_met = False`` together with the best configuration found.
    """
    results = [_greedy(problem, model, air, s) for s in problem.spacing_choices]
    return min(results, key=lambda r: (not r.target_met, r.units_used, r.achieved_max_tc))


@dataclass(frozen=True)
class ArrangementRow:
    arrangement: Arrangement
    spacing: float
    covered_band: tuple
    covered_width: float
    max_tc: float


def compare_arrangements(
    units,
    spacings,
    arrangements,
    model: CouplingModel,
    air: AirMedium = AirMedium(),
    band=(16000.0, 40000.0),
    grid_points: int = 2401,
    level: float = TC_COVERAGE_LEVEL,
):
    """Tabulate coverage for every (arrangement, spacing) pair.

    ``covered_band`` is the widest contiguous interval inside ``band`` with
    transmission at or below ``level``. Rows follow the input order,
    arrangements outermost.
    """
    grid = make_grid(band[0], band[1], grid_points)
    rows = []
    for arrangement in arrangements:
        for spacing in spacings:
            cfg = ArrayConfig(tuple(units), Arrangement(arrangement), spacing)
            t = transmission_values(cfg, model, air, grid)
            lo, hi = contiguous_coverage(grid, t, level)
            width = 0.0 if math.isnan(lo) else hi - lo
            rows.append(ArrangementRow(cfg.arrangement, spacing, (lo, hi), width, float(t.max())))
    if not rows:
        raise ArgumentError("need at least one configuration")
    return rows


def design_aadm(f_center: float, air: AirMedium = AirMedium()) -> CoiledUnit:
    """Coiled amplifier tuned to ``f_center`` with default outer dimensions."""
    return design_coiled_for(f_center, air)
