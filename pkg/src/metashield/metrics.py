"""Signal-level surrogates for protection, word-interference and command
recognition rates, plus the machine-readable defense report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .attacks import AttackKind, CapturedTrial
from .errors import ArgumentError
from .spectral import FrequencyResponse, Signal, evaluate_response, power_spectrum

SCHEMA_VERSION = 1
_EPS = 1e-12


@dataclass(frozen=True)
class RecognitionPolicy:
    """Thresholds that decide whether a capture counts as understood.

    A capture is recognized when its band-passed, lag-aligned correlation
    with the reference reaches ``corr_threshold`` and the power density in
    ``command_band`` exceeds that in ``noise_band`` by ``snr_threshold_db``.
    """

    corr_threshold: float = 0.5
    snr_threshold_db: float = 10.0
    word_distortion_db: float = 10.0
    crr_band: tuple = (100.0, 2000.0)
    crr_tolerance_db: float = 1.0
    command_band: tuple = (100.0, 4000.0)
    noise_band: tuple = (6000.0, 12000.0)
    distortion_band: tuple = (2000.0, 4000.0)
    subband_hz: float = 100.0
    max_lag_s: float = 0.05

    def __post_init__(self):
        positive = (
            self.corr_threshold,
            self.snr_threshold_db,
            self.word_distortion_db,
            self.crr_tolerance_db,
            self.subband_hz,
            self.max_lag_s,
        )
        if not all(v > 0 for v in positive):
            raise ArgumentError("policy thresholds must be positive")
        for lo, hi in (self.crr_band, self.command_band, self.noise_band, self.distortion_band):
            if not 0 <= lo < hi:
                raise ArgumentError("policy bands must satisfy 0 <= lo < hi")


def bandpass(x: np.ndarray, rate: float, lo: float, hi: float) -> np.ndarray:
    """Zero-phase brick-wall band-pass via the FFT."""
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(x.size, 1.0 / rate)
    spec[(f < lo) | (f > hi)] = 0.0
    return np.fft.irfft(spec, n=x.size)


def _check_rates(trial: CapturedTrial):
    if trial.captured.sample_rate != trial.reference.sample_rate:
        raise ArgumentError("captured and reference sample rates differ")


def _same_length(a: np.ndarray, n: int) -> np.ndarray:
    if a.size >= n:
        return a[:n]
    return np.concatenate([a, np.zeros(n - a.size)])


def _window(x: np.ndarray, start: int, end: int) -> np.ndarray:
    """``x[start:end]`` with zeros wherever the range leaves the array."""
    out = np.zeros(end - start)
    a, b = max(start, 0), min(end, x.size)
    if b > a:
        out[a - start : b - start] = x[a:b]
    return out


def lagged_correlation(ref: np.ndarray, cap_window: np.ndarray):
    """Best normalized correlation of ``ref`` against every offset in ``cap_window``.

    ``cap_window`` holds ``max_lag`` extra samples on each side of the
    aligned segment. Normalization uses the energy of the overlapping part
    of the window. Returns ``(correlation, lag)``.
    """
    n = ref.size
    max_lag = (cap_window.size - n) // 2
    ref_norm = math.sqrt(float(np.dot(ref, ref)))
    if ref_norm == 0:
        return 0.0, 0
    num = sps.correlate(cap_window, ref, mode="valid", method="fft")
    csum = np.concatenate([[0.0], np.cumsum(cap_window * cap_window)])
    energy = np.maximum(csum[n:] - csum[:-n], 0.0)
    den = ref_norm * np.sqrt(energy)
    ok = den > _EPS * ref_norm
    corr = np.zeros_like(num)
    corr[ok] = num[ok] / den[ok]
    k = int(np.argmax(corr))
    return float(corr[k]), k - max_lag


def capture_correlation(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    _check_rates(trial)
    rate = trial.reference.sample_rate
    lo, hi = policy.command_band[0], min(policy.command_band[1], rate / 2)
    ref = bandpass(trial.reference.signal.samples, rate, lo, hi)
    cap = bandpass(_same_length(trial.captured.samples, ref.size), rate, lo, hi)
    max_lag = int(round(policy.max_lag_s * rate))
    return lagged_correlation(ref, _window(cap, -max_lag, ref.size + max_lag))[0]


def capture_snr_db(captured: Signal, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    """Power-density ratio of the command band over the noise band, in dB."""
    freqs, power = power_spectrum(captured)
    nyq = captured.nyquist

    def density(lo, hi):
        hi = min(hi, nyq)
        mask = (freqs >= lo) & (freqs <= hi)
        return float(power[mask].sum()) / max(hi - lo, _EPS) if mask.any() else 0.0

    signal_d = density(*policy.command_band)
    noise_d = density(*policy.noise_band)
    if noise_d <= 0:
        return math.inf if signal_d > 0 else -math.inf
    if signal_d <= 0:
        return -math.inf
    return 10.0 * math.log10(signal_d / noise_d)


def attack_recognized(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()) -> bool:
    """Whether the capture would be understood as the reference command."""
    corr = capture_correlation(trial, policy)
    return corr >= policy.corr_threshold and capture_snr_db(trial.captured, policy) >= policy.snr_threshold_db


def psr(trials, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    """Fraction of attack trials that were not recognized."""
    trials = list(trials)
    if not trials:
        raise ArgumentError("psr needs at least one trial")
    failed = sum(not attack_recognized(t, policy) for t in trials)
    return failed / len(trials)


def log_spectral_distance(ref: np.ndarray, cap: np.ndarray, rate: float, band, norm_band, subband_hz: float) -> float:
    """Reference-weighted mean absolute dB difference over sub-bands of ``band``.

    Each spectrum is first divided by its own energy in ``norm_band``, so
    the measure ignores overall gain. Sub-band differences are weighted by
    the reference's share of energy in that sub-band.
    """
    win = np.hanning(ref.size)
    f = np.fft.rfftfreq(ref.size, 1.0 / rate)
    p_ref = np.abs(np.fft.rfft(ref * win)) ** 2
    p_cap = np.abs(np.fft.rfft(_same_length(cap, ref.size) * win)) ** 2

    def norm(p):
        m = (f >= norm_band[0]) & (f <= norm_band[1])
        e = float(p[m].sum())
        return p / e if e > 0 else p

    p_ref, p_cap = norm(p_ref), norm(p_cap)
    edges = np.arange(band[0], band[1] + 0.5 * subband_hz, subband_hz)
    idx = np.digitize(f, edges) - 1
    valid = (f >= band[0]) & (f < band[1])
    nb = edges.size - 1
    e_ref = np.bincount(idx[valid], weights=p_ref[valid], minlength=nb)[:nb]
    e_cap = np.bincount(idx[valid], weights=p_cap[valid], minlength=nb)[:nb]
    total = float(e_ref.sum())
    if total <= 0:
        return 0.0 if float(e_cap.sum()) <= 0 else math.inf
    floor = _EPS * max(total, 1.0)
    diff = np.abs(10.0 * np.log10((e_cap + floor) / (e_ref + floor)))
    return float(np.dot(e_ref / total, diff))


def word_scores(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()):
    """Per-word ``(correlation, distortion_db)`` after lag alignment."""
    _check_rates(trial)
    rate = trial.reference.sample_rate
    lo, hi = policy.command_band[0], min(policy.command_band[1], rate / 2)
    ref_full = trial.reference.signal.samples
    cap_full = _same_length(trial.captured.samples, ref_full.size)
    ref_bp = bandpass(ref_full, rate, lo, hi)
    cap_bp = bandpass(cap_full, rate, lo, hi)
    max_lag = int(round(policy.max_lag_s * rate))
    band = (policy.distortion_band[0], min(policy.distortion_band[1], rate / 2))
    out = []
    for w in trial.reference.words:
        window = _window(cap_bp, w.start - max_lag, w.end + max_lag)
        corr, lag = lagged_correlation(ref_bp[w.start : w.end], window)
        seg_cap = _window(cap_full, w.start + lag, w.end + lag)
        dist = log_spectral_distance(
            ref_full[w.start : w.end], seg_cap, rate, band, policy.crr_band, policy.subband_hz
        )
        out.append((corr, dist))
    return out


def wir(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    """Fraction of reference words destroyed in the capture."""
    if not trial.reference.words:
        raise ArgumentError("reference has no words")
    scores = word_scores(trial, policy)
    destroyed = sum(c < policy.corr_threshold or d >= policy.word_distortion_db for c, d in scores)
    return destroyed / len(scores)


def speech_band_distortion(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    """Log-spectral distance over ``crr_band`` for the whole command."""
    _check_rates(trial)
    rate = trial.reference.sample_rate
    ref = trial.reference.signal.samples
    return log_spectral_distance(ref, trial.captured.samples, rate, policy.crr_band, policy.crr_band, policy.subband_hz)


def command_recognized(trial: CapturedTrial, policy: RecognitionPolicy = RecognitionPolicy()) -> bool:
    return attack_recognized(trial, policy) and speech_band_distortion(trial, policy) <= policy.crr_tolerance_db


def crr(clean_trials, policy: RecognitionPolicy = RecognitionPolicy()) -> float:
    """Fraction of clean commands recognized without speech-band distortion."""
    trials = list(clean_trials)
    if not trials:
        raise ArgumentError("crr needs at least one trial")
    if any(t.kind is not AttackKind.CLEAN for t in trials):
        raise ArgumentError("crr accepts clean trials only")
    return sum(command_recognized(t, policy) for t in trials) / len(trials)


def transmission_stats(resp: FrequencyResponse, f_lo: float, f_hi: float) -> dict:
    """Max and mean of ``|resp|`` over grid points inside ``[f_lo, f_hi]``."""
    f = resp.freqs
    if not (f[0] <= f_lo < f_hi <= f[-1]):
        raise ArgumentError(f"band [{f_lo}, {f_hi}] is outside the response grid")
    mask = (f >= f_lo) & (f <= f_hi)
    if not mask.any():
        mag = np.abs(evaluate_response(resp, np.array([f_lo, f_hi])))
    else:
        mag = np.abs(resp.values[mask])
    return {"max": float(mag.max()), "mean": float(mag.mean())}


@dataclass(frozen=True)
class DefenseReport:
    psr: float | None
    wir: float | None
    crr: float | None
    band_tc_max: float | None
    band_tc_mean: float | None
    trials: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("psr", "wir", "crr"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "metadata": dict(sorted(self.metadata.items()))}
        for name in ("psr", "wir", "crr", "band_tc_max", "band_tc_mean"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        out["trial_count"] = len(self.trials)
        out["trials"] = [dict(t) for t in self.trials]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for name in ("psr", "wir", "crr", "band_tc_max", "band_tc_mean"):
                v = getattr(self, name)
                if v is not None:
                    w.writerow([name, repr(float(v))])


def _round(x: float) -> float:
    return float(f"{x:.12g}") if math.isfinite(x) else (1e308 if x > 0 else -1e308)


def report(
    trials,
    responses=None,
    policy: RecognitionPolicy = RecognitionPolicy(),
    metadata: dict | None = None,
    band=(16000.0, 40000.0),
) -> DefenseReport:
    """Aggregate trials into a :class:`DefenseReport`.

    PSR covers every non-clean trial, WIR is the mean over adversarial
    trials and CRR covers clean trials; a metric without trials is left
    out. ``responses`` maps names to defense responses; the transmission
    statistics of the first one are reported.
    """
    trials = list(trials)
    attacks = [t for t in trials if t.kind is not AttackKind.CLEAN]
    adversarial = [t for t in trials if t.kind is AttackKind.ADVERSARIAL]
    clean = [t for t in trials if t.kind is AttackKind.CLEAN]

    records = []
    recognized_flags = []
    wirs = []
    crr_flags = []
    for i, t in enumerate(trials):
        corr = capture_correlation(t, policy)
        snr = capture_snr_db(t.captured, policy)
        rec = corr >= policy.corr_threshold and snr >= policy.snr_threshold_db
        row = {"index": i, "kind": t.kind.value, "seed": int(t.seed)}
        row.update({k: v for k, v in sorted(t.info.items())})
        row.update({"correlation": _round(corr), "snr_db": _round(snr), "recognized": bool(rec)})
        if t.kind is AttackKind.CLEAN:
            dist = speech_band_distortion(t, policy)
            ok = rec and dist <= policy.crr_tolerance_db
            crr_flags.append(ok)
            row.update({"speech_band_distortion_db": _round(dist), "command_recognized": bool(ok)})
        else:
            recognized_flags.append(rec)
        if t.kind is AttackKind.ADVERSARIAL:
            w = wir(t, policy)
            wirs.append(w)
            row["wir"] = _round(w)
        records.append(row)

    stats = None
    if responses:
        first = next(iter(responses.values())) if isinstance(responses, dict) else responses
        stats = transmission_stats(first, *band)
    return DefenseReport(
        psr=sum(not r for r in recognized_flags) / len(attacks) if attacks else None,
        wir=float(np.mean(wirs)) if adversarial else None,
        crr=sum(crr_flags) / len(clean) if clean else None,
        band_tc_max=_round(stats["max"]) if stats else None,
        band_tc_mean=_round(stats["mean"]) if stats else None,
        trials=tuple(records),
        metadata=dict(metadata or {}),
    )
