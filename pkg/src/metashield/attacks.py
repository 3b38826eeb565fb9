"""Synthetic voice commands, attack signals and the microphone capture model."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .errors import ArgumentError, InputError
from .spectral import FrequencyResponse, Signal, apply_response, read_wav

WORD_SECONDS = 0.3
GAP_SECONDS = 0.1
FORMANT_TONES = ((500.0, 0.6), (1500.0, 0.4))
CHIRP_BAND = (2500.0, 3500.0)
CHIRP_AMPLITUDE = 0.04
FADE_SECONDS = 0.01
CAPTURE_RATE = 48000.0
CARRIER_RANGE = (16000.0, 40000.0)


@dataclass(frozen=True)
class WordSpan:
    start: int
    end: int
    label: str


@dataclass(frozen=True)
class CommandSignal:
    """A waveform with labelled word spans (``end`` exclusive, in samples)."""

    signal: Signal
    words: tuple

    def __post_init__(self):
        words = tuple(w if isinstance(w, WordSpan) else WordSpan(int(w[0]), int(w[1]), str(w[2])) for w in self.words)
        if not words:
            raise ArgumentError("a command needs at least one word")
        prev_end = 0
        for w in words:
            if not (prev_end <= w.start < w.end <= len(self.signal)):
                raise ArgumentError(f"word span {w} is out of order or out of range")
            prev_end = w.end
        object.__setattr__(self, "words", words)

    @property
    def sample_rate(self) -> float:
        return self.signal.sample_rate

    def with_signal(self, sig: Signal) -> "CommandSignal":
        """Same spans on a new waveform of the same rate and length."""
        return CommandSignal(sig, self.words)

    def spans_json(self) -> str:
        return json.dumps([{"start": w.start, "end": w.end, "label": w.label} for w in self.words])


class AttackKind(str, enum.Enum):
    CLEAN = "clean"
    INAUDIBLE = "inaudible"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class AttackSpec:
    """Declarative attack description.

    ``level`` scales the transmitted waveform: the peak of the clean or
    perturbed command, or the carrier amplitude of an inaudible attack.
    """

    kind: AttackKind = AttackKind.CLEAN
    level: float = 0.1
    carrier: float = 25000.0
    mod_index: float = 0.8
    band_lo: float = 2000.0
    band_hi: float = 4000.0
    perturbation_snr_db: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not self.level > 0:
            raise ArgumentError("level must be positive")
        if self.kind is AttackKind.INAUDIBLE:
            if not CARRIER_RANGE[0] <= self.carrier <= CARRIER_RANGE[1]:
                raise ArgumentError(f"carrier must lie in {CARRIER_RANGE} Hz")
            if not 0 < self.mod_index <= 1:
                raise ArgumentError("mod_index must lie in (0, 1]")
        if self.kind is AttackKind.ADVERSARIAL:
            if not 0 <= self.band_lo < self.band_hi:
                raise ArgumentError("need 0 <= band_lo < band_hi")
            if self.perturbation_snr_db < 10:
                raise ArgumentError("perturbation must stay at least 10 dB below the command")

    @classmethod
    def clean(cls, level: float = 0.1) -> "AttackSpec":
        return cls(AttackKind.CLEAN, level)

    @classmethod
    def inaudible(cls, carrier: float, mod_index: float = 0.8, level: float = 0.2) -> "AttackSpec":
        return cls(AttackKind.INAUDIBLE, level, carrier=carrier, mod_index=mod_index)

    @classmethod
    def adversarial(
        cls, band_lo: float = 2000.0, band_hi: float = 4000.0, snr_db: float = 20.0, level: float = 0.1
    ) -> "AttackSpec":
        return cls(AttackKind.ADVERSARIAL, level, band_lo=band_lo, band_hi=band_hi, perturbation_snr_db=snr_db)


@dataclass(frozen=True)
class MicrophoneModel:
    """Second-order microphone: ``y = a1 x + a2 x^2``, lowpass, noise.

    ``noise_floor_db`` sets the standard deviation of the additive white
    noise relative to unit amplitude at the output rate.
    """

    a1: float = 1.0
    a2: float = 0.5
    lowpass_cutoff: float = 20000.0
    noise_floor_db: float = -60.0
    transition_hz: float = 2000.0
    stopband_db: float = 65.0

    def __post_init__(self):
        if not self.a1 > 0:
            raise ArgumentError("a1 must be positive")
        if not self.a2 >= 0:
            raise ArgumentError("a2 must be non-negative")
        if not self.lowpass_cutoff > 0:
            raise ArgumentError("lowpass_cutoff must be positive")
        if not (self.transition_hz > 0 and self.stopband_db >= 60):
            raise ArgumentError("filter needs a positive transition and >= 60 dB stopband")


@dataclass(frozen=True)
class CapturedTrial:
    captured: Signal
    reference: CommandSignal
    kind: AttackKind = AttackKind.CLEAN
    seed: int = 0
    info: dict = field(default_factory=dict)


def _label_phases(label: str, n: int):
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [2.0 * np.pi * digest[i] / 256.0 for i in range(n)]


def synth_command(labels, sample_rate: float = CAPTURE_RATE) -> CommandSignal:
    """Formant-proxy command: one 300 ms burst per label with 100 ms gaps.

    Each burst holds two vowel tones and a quieter 2.5 to 3.5 kHz consonant
    chirp under 10 ms raised-cosine fades. Tone phases are derived from the
    label text, so equal labels give equal bursts.
    """
    labels = list(labels)
    if not labels:
        raise ArgumentError("need at least one label")
    if sample_rate < 16000:
        raise ArgumentError("sample_rate must be at least 16 kHz")
    n_word = int(round(WORD_SECONDS * sample_rate))
    n_gap = int(round(GAP_SECONDS * sample_rate))
    t = np.arange(n_word) / sample_rate
    n_fade = int(round(FADE_SECONDS * sample_rate))
    env = np.ones(n_word)
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_fade) / n_fade)
    env[:n_fade] = ramp
    env[n_word - n_fade :] = ramp[::-1]
    chirp_rate = (CHIRP_BAND[1] - CHIRP_BAND[0]) / WORD_SECONDS

    total = len(labels) * n_word + (len(labels) - 1) * n_gap
    x = np.zeros(total)
    words = []
    for k, label in enumerate(labels):
        phases = _label_phases(str(label), 3)
        burst = np.zeros(n_word)
        for (freq, amp), ph in zip(FORMANT_TONES, phases):
            burst += amp * np.sin(2.0 * np.pi * freq * t + ph)
        burst += CHIRP_AMPLITUDE * np.sin(
            2.0 * np.pi * (CHIRP_BAND[0] * t + 0.5 * chirp_rate * t * t) + phases[2]
        )
        start = k * (n_word + n_gap)
        x[start : start + n_word] = burst * env
        words.append(WordSpan(start, start + n_word, str(label)))
    return CommandSignal(Signal(sample_rate, x), tuple(words))


def ingest_command(wav_path, spans_path=None) -> CommandSignal:
    """Load a command from WAV plus an optional ``[{start, end, label}]`` JSON.

    Without a spans file the whole recording is one word labelled with the
    file stem.
    """
    sig = read_wav(wav_path)
    if spans_path is None:
        from pathlib import Path

        return CommandSignal(sig, (WordSpan(0, len(sig), Path(wav_path).stem),))
    try:
        with open(spans_path) as fh:
            raw = json.load(fh)
        words = tuple(WordSpan(int(d["start"]), int(d["end"]), str(d["label"])) for d in raw)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read spans {spans_path}: {exc}") from exc
    try:
        return CommandSignal(sig, words)
    except ArgumentError as exc:
        raise InputError(str(exc)) from exc


def resample(sig: Signal, rate: float) -> Signal:
    """Polyphase resampling to ``rate`` (rational approximation of the ratio)."""
    if rate == sig.sample_rate:
        return sig
    ratio = Fraction(rate / sig.sample_rate).limit_denominator(1000)
    y = sps.resample_poly(sig.samples, ratio.numerator, ratio.denominator)
    return Signal(sig.sample_rate * ratio.numerator / ratio.denominator, y)


def modulate_inaudible(cmd: CommandSignal, carrier: float, mod_index: float = 0.8, level: float = 0.2) -> Signal:
    """Double-sideband AM with carrier: ``level (1 + m x) cos(2 pi fc t)``.

    The command is peak-normalized, then upsampled by a polyphase filter to
    ``max(rate, 2.5 carrier)`` when needed.
    """
    if not CARRIER_RANGE[0] <= carrier <= CARRIER_RANGE[1]:
        raise ArgumentError(f"carrier must lie in {CARRIER_RANGE} Hz")
    if not 0 <= mod_index <= 1:
        raise ArgumentError("mod_index must lie in [0, 1]")
    x = cmd.signal
    peak = float(np.max(np.abs(x.samples)))
    x = x.with_samples(x.samples / peak if peak > 0 else x.samples)
    x = resample(x, max(x.sample_rate, 2.5 * carrier))
    t = np.arange(len(x)) / x.sample_rate
    return Signal(x.sample_rate, level * (1.0 + mod_index * x.samples) * np.cos(2.0 * np.pi * carrier * t))


def lowpass_taps(cutoff: float, rate: float, transition_hz: float, stopband_db: float) -> np.ndarray:
    """Kaiser-window linear-phase lowpass with odd length."""
    nyq = rate / 2.0
    numtaps, beta = sps.kaiserord(stopband_db, transition_hz / nyq)
    numtaps |= 1
    return sps.firwin(numtaps, cutoff, window=("kaiser", beta), fs=rate)


def mic_capture(x: Signal, mic: MicrophoneModel = MicrophoneModel(), seed: int = 0) -> Signal:
    """Microphone output for acoustic input ``x``.

    The input is oversampled twice so the squared term's sum frequencies do
    not alias, passed through ``a1 x + a2 x^2`` and the linear-phase lowpass
    (delay compensated), brought to 48 kHz when the input rate is higher
    (otherwise back to the input rate), and finally receives seeded white
    noise.
    """
    if mic.lowpass_cutoff > x.nyquist:
        raise ArgumentError("lowpass cutoff above the input Nyquist frequency")
    up = sps.resample_poly(x.samples, 2, 1)
    rate = 2.0 * x.sample_rate
    y = mic.a1 * up + mic.a2 * up * up
    taps = lowpass_taps(mic.lowpass_cutoff, rate, mic.transition_hz, mic.stopband_db)
    delay = (taps.size - 1) // 2
    y = sps.fftconvolve(y, taps)[delay : delay + up.size]
    out_rate = CAPTURE_RATE if x.sample_rate > CAPTURE_RATE else x.sample_rate
    out = resample(Signal(rate, y), out_rate)
    rng = np.random.default_rng(seed)
    sigma = 10.0 ** (mic.noise_floor_db / 20.0)
    return out.with_samples(out.samples + sigma * rng.standard_normal(len(out)))


def bandlimited_noise(n: int, rate: float, band_lo: float, band_hi: float, seed: int) -> np.ndarray:
    """Seeded Gaussian noise with every FFT bin outside the band zeroed."""
    rng = np.random.default_rng(seed)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(f < band_lo) | (f > band_hi)] = 0.0
    return np.fft.irfft(spec, n=n)


def inject_adversarial(
    clean: CommandSignal, band_lo: float = 2000.0, band_hi: float = 4000.0, snr_db: float = 20.0, seed: int = 0
) -> CommandSignal:
    """Add a band-limited perturbation ``snr_db`` below the command's power."""
    if snr_db < 10:
        raise ArgumentError("perturbation must stay at least 10 dB below the command")
    if not (0 <= band_lo < band_hi <= clean.signal.nyquist):
        raise ArgumentError("perturbation band must lie within the Nyquist range")
    x = clean.signal.samples
    delta = bandlimited_noise(x.size, clean.sample_rate, band_lo, band_hi, seed)
    p_clean = float(np.mean(x * x))
    p_delta = float(np.mean(delta * delta))
    if p_delta == 0:
        raise ArgumentError("perturbation band contains no FFT bins")
    delta *= math.sqrt(p_clean / p_delta * 10.0 ** (-snr_db / 10.0))
    return clean.with_signal(Signal(clean.sample_rate, x + delta))


def _scaled(cmd: CommandSignal, level: float) -> CommandSignal:
    peak = float(np.max(np.abs(cmd.signal.samples)))
    scale = level / peak if peak > 0 else 0.0
    return cmd.with_signal(cmd.signal.with_samples(cmd.signal.samples * scale))


def run_attack(
    spec: AttackSpec,
    cmd: CommandSignal,
    defense: FrequencyResponse | None = None,
    mic: MicrophoneModel = MicrophoneModel(),
    seed: int = 0,
) -> CapturedTrial:
    """Transmit ``cmd`` as described by ``spec``, optionally through ``defense``.

    The perturbation (if any) and the microphone noise draw from streams
    seeded by ``seed``. The reference is the clean, unscaled command at the
    captured sample rate.
    """
    if spec.kind is AttackKind.INAUDIBLE:
        tx = modulate_inaudible(cmd, spec.carrier, spec.mod_index, spec.level)
    elif spec.kind is AttackKind.ADVERSARIAL:
        perturbed = inject_adversarial(cmd, spec.band_lo, spec.band_hi, spec.perturbation_snr_db, seed)
        tx = _scaled(perturbed, spec.level).signal
    else:
        tx = _scaled(cmd, spec.level).signal
    if defense is not None:
        tx = apply_response(tx, defense)
    captured = mic_capture(tx, mic, seed + 1_000_003)
    reference = cmd
    if captured.sample_rate != cmd.sample_rate:
        ratio = captured.sample_rate / cmd.sample_rate
        sig = resample(cmd.signal, captured.sample_rate)
        words = tuple(
            WordSpan(int(round(w.start * ratio)), min(len(sig), int(round(w.end * ratio))), w.label)
            for w in cmd.words
        )
        reference = CommandSignal(sig, words)
    return CapturedTrial(captured, reference, spec.kind, seed)
