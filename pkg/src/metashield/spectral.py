"""Signals, frequency responses and FFT-domain filtering.

Every model in the toolkit produces a :class:`FrequencyResponse` and every
waveform travels as a :class:`Signal`. Both are immutable; their numpy
buffers are flagged read-only on construction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ArgumentError, InputError


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled real waveform.

    Parameters
    ----------
    sample_rate : float
        Samples per second, strictly positive.
    samples : array_like
        Real, finite amplitudes. At least one sample.
    """

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        rate = float(self.sample_rate)
        if not np.isfinite(rate) or rate <= 0:
            raise ArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        x = np.asarray(self.samples)
        if np.iscomplexobj(x):
            raise ArgumentError("samples must be real")
        x = x.astype(np.float64).reshape(-1)
        if x.size < 1:
            raise ArgumentError("a signal needs at least one sample")
        if not np.all(np.isfinite(x)):
            raise ArgumentError("samples must be finite")
        object.__setattr__(self, "sample_rate", rate)
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    def energy(self) -> float:
        """Sum of squared samples."""
        return float(np.dot(self.samples, self.samples))

    def with_samples(self, samples) -> "Signal":
        return Signal(self.sample_rate, samples)


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """Complex gain sampled on a strictly ascending, non-negative grid.

    Outside ``[freqs[0], freqs[-1]]`` the response is transparent (unity).
    """

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.float64).reshape(-1)
        v = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if f.size < 1 or f.size != v.size:
            raise ArgumentError("freqs and values must be non-empty and equally long")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ArgumentError("freqs must be finite and non-negative")
        if np.any(np.diff(f) <= 0):
            raise ArgumentError("freqs must be strictly ascending")
        if not np.all(np.isfinite(v)):
            raise ArgumentError("values must be finite")
        object.__setattr__(self, "freqs", _frozen(f))
        object.__setattr__(self, "values", _frozen(v))

    def __len__(self):
        return self.freqs.size

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def __call__(self, f):
        return evaluate_response(self, f)

    @classmethod
    def identity(cls, freqs) -> "FrequencyResponse":
        f = np.asarray(freqs, dtype=np.float64)
        return cls(f, np.ones_like(f, dtype=np.complex128))


def make_grid(f_min: float, f_max: float, n_points: int, mode: str = "linear") -> np.ndarray:
    """Frequency grid of ``n_points`` values from ``f_min`` to ``f_max`` inclusive.

    ``mode`` is ``"linear"`` or ``"log"``; a log grid needs ``f_min > 0``.
    """
    if not (np.isfinite(f_min) and np.isfinite(f_max)) or f_min < 0 or f_min >= f_max:
        raise ArgumentError(f"need 0 <= f_min < f_max, got ({f_min}, {f_max})")
    if int(n_points) != n_points or n_points < 2:
        raise ArgumentError(f"n_points must be an integer >= 2, got {n_points}")
    n = int(n_points)
    if mode == "linear":
        grid = np.linspace(f_min, f_max, n)
    elif mode == "log":
        if f_min <= 0:
            raise ArgumentError("log grid requires f_min > 0")
        grid = np.geomspace(f_min, f_max, n)
    else:
        raise ArgumentError(f"unknown grid mode {mode!r}")
    grid[0], grid[-1] = f_min, f_max
    return grid


def evaluate_response(resp: FrequencyResponse, f):
    """Linearly interpolated complex gain at ``f`` (scalar or array)."""
    fa = np.asarray(f, dtype=np.float64)
    if np.any(fa < 0) or not np.all(np.isfinite(fa)):
        raise ArgumentError("frequencies must be finite and non-negative")
    grid, vals = resp.freqs, resp.values
    out = np.interp(fa, grid, vals.real) + 1j * np.interp(fa, grid, vals.imag)
    outside = (fa < grid[0]) | (fa > grid[-1])
    out = np.where(outside, 1.0 + 0.0j, out)
    if fa.ndim == 0:
        return complex(out)
    return out


def apply_response(sig: Signal, resp: FrequencyResponse) -> Signal:
    """Filter ``sig`` by multiplying its spectrum with ``resp``.

    The one-sided spectrum is used, so the implied two-sided spectrum is
    conjugate-symmetric by construction; the DC bin and (for even lengths)
    the Nyquist bin are forced real.
    """
    n = len(sig)
    spectrum = np.fft.rfft(sig.samples)
    bins = np.fft.rfftfreq(n, d=1.0 / sig.sample_rate)
    gain = np.asarray(evaluate_response(resp, bins), dtype=np.complex128)
    gain[0] = gain[0].real
    if n % 2 == 0:
        gain[-1] = gain[-1].real
    return Signal(sig.sample_rate, np.fft.irfft(spectrum * gain, n=n))


def compose(a: FrequencyResponse, b: FrequencyResponse) -> FrequencyResponse:
    """Pointwise product of two responses on the union of their grids."""
    grid = np.union1d(a.freqs, b.freqs)
    return FrequencyResponse(grid, evaluate_response(a, grid) * evaluate_response(b, grid))


def power_spectrum(sig: Signal):
    """One-sided power per FFT bin, scaled so the bins sum to the signal energy."""
    n = len(sig)
    spec = np.fft.rfft(sig.samples)
    power = np.abs(spec) ** 2 / n
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    return np.fft.rfftfreq(n, d=1.0 / sig.sample_rate), power


def band_energy(sig: Signal, f_lo: float, f_hi: float) -> float:
    """Energy in FFT bins with ``f_lo <= f <= f_hi``.

    Over ``[0, nyquist]`` this equals ``sum(x**2)`` (Parseval).
    """
    nyq = sig.nyquist
    if f_lo < 0 or f_lo >= f_hi or f_hi > nyq * (1 + 1e-12):
        raise ArgumentError(f"band [{f_lo}, {f_hi}] must satisfy 0 <= lo < hi <= {nyq}")
    freqs, power = power_spectrum(sig)
    mask = (freqs >= f_lo) & (freqs <= f_hi)
    return float(power[mask].sum())


# --- serialization -----------------------------------------------------------

def read_wav(path) -> Signal:
    """Read a mono (or first-channel) WAV file as floats in [-1, 1)."""
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read WAV {path}: {exc}") from exc
    if data.ndim > 1:
        data = data[:, 0]
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise InputError(f"unsupported WAV sample type {data.dtype}")
    if x.size == 0:
        raise InputError(f"WAV {path} has no samples")
    return Signal(float(rate), x)


def write_wav(path, sig: Signal, fmt: str = "pcm16") -> None:
    """Write ``sig`` as 16-bit PCM (``"pcm16"``) or 32-bit float (``"float32"``).

    PCM output is clipped to the representable range. The sample rate is
    rounded to an integer as the format requires.
    """
    if fmt == "pcm16":
        data = np.clip(np.round(sig.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = sig.samples.astype(np.float32)
    else:
        raise ArgumentError(f"unknown WAV format {fmt!r}")
    wavfile.write(str(path), int(round(sig.sample_rate)), data)


def response_to_csv(resp: FrequencyResponse, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f_hz", "re", "im"])
        for f, v in zip(resp.freqs, resp.values):
            w.writerow([repr(float(f)), repr(float(v.real)), repr(float(v.imag))])


def response_from_csv(path) -> FrequencyResponse:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["f_hz", "re", "im"]:
        raise InputError(f"{path}: expected header f_hz,re,im")
    try:
        arr = np.array([[float(c) for c in row] for row in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry") from exc
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InputError(f"{path}: expected three columns")
    return FrequencyResponse(arr[:, 0], arr[:, 1] + 1j * arr[:, 2])


def response_to_json(resp: FrequencyResponse) -> str:
    return json.dumps(
        {
            "f_hz": resp.freqs.tolist(),
            "re": resp.values.real.tolist(),
            "im": resp.values.imag.tolist(),
        }
    )


def response_from_json(text: str) -> FrequencyResponse:
    try:
        obj = json.loads(text)
        return FrequencyResponse(
            np.asarray(obj["f_hz"], dtype=float),
            np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed response JSON: {exc}") from exc


def write_columns(path, header, columns) -> None:
    """Write equally long numeric columns as CSV with the given header."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])
