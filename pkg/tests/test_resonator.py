import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from metashield import defaults
from metashield.errors import ArgumentError, InfeasibleDesignError
from metashield.resonator import (
    AirMedium,
    ResonatorUnit,
    design_unit_for,
    lumped_elements,
    resonance_frequency,
    side_branch_transmission,
    single_unit_transmission,
    unit_impedance,
)

AIR = AirMedium()
lengths = st.floats(0.05e-3, 40e-3, allow_nan=False, allow_infinity=False)


def notch_width_bruteforce(unit, level=0.2, step=0.05):
    """Width of the T <= level region found by scanning a fine grid."""
    f0 = resonance_frequency(unit)
    f = np.arange(0.8 * f0, 1.2 * f0, step)
    t = single_unit_transmission(unit, AIR, f).magnitude
    inside = f[t <= level]
    return inside[-1] - inside[0] if inside.size else 0.0


class TestUnitRecord:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"h": 0.0},
            {"h": -1e-3},
            {"h": 1e-3, "r": 0.0},
            {"h": 1e-3, "q_factor": 0.0},
            {"h": 1e-3, "r": 2e-3, "cavity_radius": 1e-3},
            {"h": math.nan},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ArgumentError):
            ResonatorUnit(**kwargs)

    def test_cavity_volume(self):
        u = ResonatorUnit(h=2e-3, cavity_radius=5e-3)
        assert u.cavity_volume == pytest.approx(math.pi * 25e-6 * 2e-3, rel=1e-15)

    def test_air_rejects_non_positive(self):
        with pytest.raises(ArgumentError):
            AirMedium(sound_speed=0.0)


class TestResonanceFrequency:
    @pytest.mark.parametrize(
        "h_mm, expected, tol",
        [(2.0, 24500.0, 1e-9), (3.2, 18244.7, 0.1), (4.8, 13611.1, 0.1)],
    )
    def test_reference_units(self, h_mm, expected, tol):
        f = resonance_frequency(ResonatorUnit(h=h_mm * 1e-3, r=1.5e-3))
        assert f == pytest.approx(expected, abs=tol)

    @given(lengths, lengths)
    def test_matches_quarter_wave_law(self, h, r):
        unit = ResonatorUnit(h=h, r=r, cavity_radius=max(r, 5e-3))
        assert resonance_frequency(unit) == pytest.approx(343.0 / (4.0 * (h + r)), rel=1e-12)

    @given(lengths, lengths, st.floats(1.001, 3.0))
    def test_strictly_decreasing(self, h, r, factor):
        base = resonance_frequency(ResonatorUnit(h=h, r=r, cavity_radius=max(r * 3, 5e-3)))
        assert resonance_frequency(ResonatorUnit(h=h * factor, r=r, cavity_radius=max(r * 3, 5e-3))) < base
        assert resonance_frequency(ResonatorUnit(h=h, r=r * factor, cavity_radius=max(r * 3, 5e-3))) < base


class TestDesignUnitFor:
    @pytest.mark.parametrize("f, h_mm", [(24500.0, 2.0), (3000.0, 27.083333333)])
    def test_depth(self, f, h_mm):
        assert design_unit_for(f, 1.5e-3).h * 1e3 == pytest.approx(h_mm, abs=1e-6)

    def test_too_high_is_infeasible(self):
        with pytest.raises(InfeasibleDesignError):
            design_unit_for(57167.0, 1.5e-3)

    def test_non_positive_target(self):
        with pytest.raises(ArgumentError):
            design_unit_for(0.0)

    def test_passes_unit_fields(self):
        u = design_unit_for(20000.0, q_factor=33.0)
        assert u.q_factor == 33.0

    @given(st.floats(500.0, 50000.0), st.floats(0.2e-3, 3e-3))
    def test_round_trip(self, f, r):
        assume(343.0 / (4 * f) - r > 1e-6)
        unit = design_unit_for(f, r, cavity_radius=5e-3)
        assert resonance_frequency(unit) == pytest.approx(f, rel=1e-9)


class TestImpedance:
    unit = ResonatorUnit(h=3.2e-3)

    def test_reactance_zero_at_resonance(self):
        f0 = resonance_frequency(self.unit)
        assert unit_impedance(self.unit, AIR, f0 * (1 - 1e-6)).imag < 0
        assert unit_impedance(self.unit, AIR, f0 * (1 + 1e-6)).imag > 0

    def test_magnitude_at_resonance_is_resistance(self):
        f0 = resonance_frequency(self.unit)
        _, _, r = lumped_elements(self.unit)
        assert abs(unit_impedance(self.unit, AIR, f0)) == pytest.approx(r, rel=1e-9)

    def test_doubling_q_halves_resistance(self):
        r1 = lumped_elements(ResonatorUnit(h=3.2e-3, q_factor=40.0))[2]
        r2 = lumped_elements(ResonatorUnit(h=3.2e-3, q_factor=80.0))[2]
        assert r2 == pytest.approx(r1 / 2, rel=1e-12)

    def test_lumped_resonance_equals_quarter_wave(self):
        m, c, _ = lumped_elements(self.unit)
        assert 1 / (2 * math.pi * math.sqrt(m * c)) == pytest.approx(resonance_frequency(self.unit), rel=1e-12)

    def test_mass_and_compliance_share_one_scale(self):
        # the raw geometric ratio M/C must survive the rescaling
        rho, v = AIR.density, AIR.sound_speed
        m_raw = rho * (self.unit.neck_length + 1.7 * self.unit.r) / (math.pi * self.unit.r**2)
        c_raw = self.unit.cavity_volume / (rho * v * v)
        m, c, _ = lumped_elements(self.unit)
        assert m / c == pytest.approx(m_raw / c_raw, rel=1e-12)

    @pytest.mark.parametrize("f", [0.0, -10.0])
    def test_non_positive_frequency(self, f):
        with pytest.raises(ArgumentError):
            unit_impedance(self.unit, AIR, f)


class TestSingleUnitTransmission:
    @pytest.mark.parametrize("h", defaults.IADM_HEIGHTS)
    def test_depth_at_resonance(self, h):
        unit = ResonatorUnit(h=h)
        t0 = single_unit_transmission(unit, AIR, [resonance_frequency(unit)]).values[0].real
        _, _, r = lumped_elements(unit)
        assert t0 == pytest.approx(r / (r + defaults.Z_REF), rel=1e-12)
        assert t0 <= 0.2

    @pytest.mark.parametrize("h", defaults.IADM_HEIGHTS)
    def test_bandwidth_in_narrowband_range(self, h):
        width = notch_width_bruteforce(ResonatorUnit(h=h))
        assert 1000.0 <= width <= 2000.0

    @pytest.mark.parametrize("h", defaults.IADM_HEIGHTS)
    def test_far_below_resonance_is_open(self, h):
        unit = ResonatorUnit(h=h)
        t = single_unit_transmission(unit, AIR, [resonance_frequency(unit) / 4]).values[0].real
        assert t >= 0.95

    def test_zero_frequency_transmits(self):
        t = single_unit_transmission(ResonatorUnit(h=2e-3), AIR, [0.0, 100.0])
        assert t.values[0] == 1.0

    @settings(max_examples=40, deadline=None)
    @given(lengths, st.floats(1.0, 200.0), st.integers(50, 2000))
    def test_bounded_and_minimum_at_resonance(self, h, q, n):
        unit = ResonatorUnit(h=h, q_factor=q)
        f0 = resonance_frequency(unit)
        grid = np.linspace(0.5 * f0, 1.5 * f0, n)
        t = single_unit_transmission(unit, AIR, grid).magnitude
        assert np.all((t >= 0) & (t <= 1))
        assert abs(grid[np.argmin(t)] - f0) <= grid[1] - grid[0]

    @given(st.complex_numbers(max_magnitude=1e9, allow_nan=False, allow_infinity=False), st.floats(1.0, 1e8))
    def test_side_branch_bounded_for_passive_branch(self, z, z_ref):
        z = complex(abs(z.real), z.imag)
        t = side_branch_transmission(z, z_ref)
        assert 0.0 <= t <= 1.0
