import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metashield.attacks import AttackKind, AttackSpec, CapturedTrial, MicrophoneModel, run_attack, synth_command
from metashield.coupling import CouplingModel, array_transmission, reference_array
from metashield.device import MOBILE, build_device
from metashield.errors import ArgumentError
from metashield.metrics import (
    DefenseReport,
    RecognitionPolicy,
    attack_recognized,
    crr,
    psr,
    report,
    transmission_stats,
    wir,
)
from metashield.resonator import AirMedium, ResonatorUnit
from metashield.spectral import FrequencyResponse, Signal, make_grid

RATE = 48000.0
WORDS = tuple(f"word{i}" for i in range(10))
CLEAN_MIC = MicrophoneModel(a2=0.0, noise_floor_db=-120.0)


@pytest.fixture(scope="module")
def command():
    return synth_command(WORDS[:3])


@pytest.fixture(scope="module")
def defense():
    return build_device(MOBILE)


@pytest.fixture(scope="module")
def pool(command):
    """Recognized and unrecognized attack trials to mix in property tests."""
    hit = [run_attack(AttackSpec.inaudible(25000.0), command, seed=s) for s in range(2)]
    rng = np.random.default_rng(0)
    noise = [
        CapturedTrial(Signal(RATE, 1e-3 * rng.standard_normal(len(command.signal))), command, AttackKind.INAUDIBLE, s)
        for s in range(2)
    ]
    return hit + noise


def same(command, kind=AttackKind.CLEAN):
    return CapturedTrial(command.signal, command, kind)


class TestRecognition:
    def test_identical_capture(self, command):
        assert attack_recognized(same(command))

    def test_pure_noise(self, command):
        rng = np.random.default_rng(1)
        noise = Signal(RATE, 0.1 * rng.standard_normal(len(command.signal)))
        assert not attack_recognized(CapturedTrial(noise, command))

    def test_rate_mismatch(self, command):
        with pytest.raises(ArgumentError):
            attack_recognized(CapturedTrial(Signal(44100.0, command.signal.samples), command))

    def test_delay_tolerated(self, command):
        delayed = np.concatenate([np.zeros(480), command.signal.samples[:-480]])
        assert attack_recognized(CapturedTrial(Signal(RATE, delayed), command))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_monotone_in_threshold(self, lo, hi):
        lo, hi = sorted((lo, hi))
        rng = np.random.default_rng(2)
        sig = synth_command(["a", "b"])
        noisy = Signal(RATE, sig.signal.samples + 0.3 * rng.standard_normal(len(sig.signal)))
        trial = CapturedTrial(noisy, sig)
        if attack_recognized(trial, RecognitionPolicy(corr_threshold=hi)):
            assert attack_recognized(trial, RecognitionPolicy(corr_threshold=lo))


class TestPsr:
    def test_all_recognized(self, command):
        assert psr([same(command, AttackKind.INAUDIBLE)] * 3) == 0.0

    def test_none_recognized(self, pool):
        assert psr(pool[2:]) == 1.0

    def test_empty(self):
        with pytest.raises(ArgumentError):
            psr([])

    @settings(max_examples=20, deadline=None)
    @given(st.lists(st.integers(0, 3), min_size=1, max_size=6), st.lists(st.integers(0, 3), min_size=1, max_size=6))
    def test_concatenation_is_weighted_mean(self, pool, a, b):
        ta, tb = [pool[i] for i in a], [pool[i] for i in b]
        expected = (psr(ta) * len(ta) + psr(tb) * len(tb)) / (len(ta) + len(tb))
        assert psr(ta + tb) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(0.0, 1.0))
    def test_bounded(self, pool, frac):
        k = int(round(frac * 4))
        assert 0.0 <= psr(pool[:max(k, 1)]) <= 1.0

    def test_defended_inaudible_campaign(self, command, defense):
        trials = [
            run_attack(AttackSpec.inaudible(carrier), command, defense, seed=i)
            for carrier in (18000.0, 25000.0, 40000.0)
            for i in range(10)
        ]
        assert psr(trials) == 1.0


class TestWir:
    def test_identical(self, command):
        assert wir(same(command)) == 0.0

    def test_silence(self, command):
        assert wir(CapturedTrial(Signal(RATE, np.zeros(len(command.signal))), command)) == 1.0

    def test_defended_adversarial(self, defense):
        cmd = synth_command(WORDS)
        trial = run_attack(AttackSpec.adversarial(), cmd, defense, seed=0)
        assert wir(trial) >= 0.95

    def test_undefended_adversarial_intact(self):
        cmd = synth_command(WORDS)
        assert wir(run_attack(AttackSpec.adversarial(), cmd, seed=0)) == 0.0

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1e-3, 1e3))
    def test_scale_invariant(self, defense, scale):
        cmd = synth_command(WORDS[:4])
        trial = run_attack(AttackSpec.adversarial(), cmd, defense, seed=0)
        scaled = CapturedTrial(Signal(RATE, scale * trial.captured.samples), trial.reference, trial.kind)
        assert wir(scaled) == wir(trial)


class TestCrr:
    def test_pass_through(self, command):
        trials = [run_attack(AttackSpec.clean(), command, mic=CLEAN_MIC, seed=i) for i in range(3)]
        assert crr(trials) == 1.0

    def test_defended_clean_commands(self, defense):
        trials = [run_attack(AttackSpec.clean(), synth_command([w]), defense, seed=i) for i, w in enumerate(WORDS)]
        assert crr(trials) == 1.0

    def test_speech_notch_destroys(self, command):
        f = make_grid(0.0, RATE / 2, 24001)
        notch = FrequencyResponse(f, np.where((f >= 100) & (f <= 2000), 0.0, 1.0).astype(complex))
        trials = [run_attack(AttackSpec.clean(), command, notch, seed=i) for i in range(3)]
        assert crr(trials) == 0.0

    def test_rejects_attack_trials(self, command):
        with pytest.raises(ArgumentError):
            crr([same(command, AttackKind.ADVERSARIAL)])

    def test_empty(self):
        with pytest.raises(ArgumentError):
            crr([])

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1e-3, 1e3))
    def test_scale_invariant(self, defense, scale):
        cmd = synth_command(["scale"])
        trial = run_attack(AttackSpec.clean(), cmd, defense, seed=0)
        scaled = CapturedTrial(Signal(RATE, scale * trial.captured.samples), trial.reference, trial.kind)
        assert crr([scaled]) == crr([trial])


class TestTransmissionStats:
    def test_constant(self):
        f = make_grid(0.0, 50000.0, 101)
        stats = transmission_stats(FrequencyResponse(f, np.full(f.size, 0.1 + 0j)), 16000.0, 40000.0)
        assert stats == pytest.approx({"max": 0.1, "mean": 0.1}, abs=1e-15)

    def test_reference_array(self):
        f = make_grid(16000.0, 40000.0, 2401)
        t = array_transmission(reference_array(), CouplingModel(), AirMedium(), f)
        assert transmission_stats(t, 16000.0, 40000.0)["max"] <= 0.15

    def test_single_unit_leaves_band_open(self):
        f = make_grid(16000.0, 40000.0, 2401)
        cfg = type(reference_array())((ResonatorUnit(h=3.2e-3),), reference_array().arrangement, 0.1e-3)
        t = array_transmission(cfg, CouplingModel(), AirMedium(), f)
        assert transmission_stats(t, 16000.0, 40000.0)["max"] > 0.5

    def test_band_outside_grid(self):
        f = make_grid(0.0, 20000.0, 11)
        with pytest.raises(ArgumentError):
            transmission_stats(FrequencyResponse.identity(f), 16000.0, 40000.0)


class TestReport:
    def test_clean_only_omits_psr(self, command):
        rep = report([run_attack(AttackSpec.clean(), command, mic=CLEAN_MIC)])
        d = rep.to_dict()
        assert "psr" not in d and d["crr"] == 1.0 and d["schema_version"] == 1

    def test_fractions_echo_components(self, command, defense):
        trials = [
            run_attack(AttackSpec.inaudible(25000.0), command, defense, seed=0),
            run_attack(AttackSpec.adversarial(), command, defense, seed=1),
            run_attack(AttackSpec.clean(), command, defense, seed=2),
        ]
        rep = report(trials, {"mobile": defense})
        assert rep.psr == psr(trials[:2])
        assert rep.wir == wir(trials[1])
        assert rep.crr == crr(trials[2:])
        assert rep.band_tc_max == pytest.approx(transmission_stats(defense, 16000.0, 40000.0)["max"], rel=1e-11)

    def test_byte_identical(self, command, defense):
        def run():
            trials = [run_attack(AttackSpec.inaudible(25000.0), command, defense, seed=s) for s in range(2)]
            return report(trials, {"mobile": defense}, metadata={"b": 1, "a": 2}).to_json()

        first = run()
        assert first == run()
        assert list(json.loads(first)) == ["schema_version", "metadata", "psr", "band_tc_max", "band_tc_mean", "trial_count", "trials"]

    def test_csv(self, command, tmp_path):
        rep = report([same(command)])
        rep.write_csv(tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text().splitlines() == ["metric,value", "crr,1.0"]

    @pytest.mark.parametrize("field", ["psr", "wir", "crr"])
    def test_fractions_validated(self, field):
        kwargs = {"psr": None, "wir": None, "crr": None, "band_tc_max": None, "band_tc_mean": None}
        kwargs[field] = 1.5
        with pytest.raises(ArgumentError):
            DefenseReport(**kwargs)
