"""Mono source signals: WAV loading and a synthetic speech-band test source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile


@dataclass(frozen=True)
class Signal:
    """Mono signal with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)):
            raise ValueError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def load_wav(path, expect_rate: int | None = None) -> Signal:
    """Load a mono PCM16 or float32 WAV file, normalized to [-1, 1].

    Refuses multichannel files (downmix first), unsupported sample formats,
    and, when `expect_rate` is given, any rate mismatch — this library never
    resamples.
    """
    try:
        rate, data = wavfile.read(path)
    except Exception as e:
        raise ValueError(f"cannot parse WAV file {path}: {e}") from e
    if data.ndim != 1:
        raise ValueError(
            f"{path} has {data.shape[1]} channels; downmix to mono before loading"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"unsupported WAV sample format {data.dtype}; use 16-bit PCM or 32-bit float"
        )
    if expect_rate is not None and rate != expect_rate:
        raise ValueError(
            f"{path} is sampled at {rate} Hz but {expect_rate} Hz is required; "
            "resample the file explicitly"
        )
    return Signal(samples, int(rate))


def write_wav(path, signal: Signal) -> None:
    """Write a Signal as mono PCM16 (test helper; inverse of load_wav scaling)."""
    q = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, signal.sample_rate, q)


def synth_speechband(
    duration_s: float,
    seed: int,
    sample_rate: int = 8000,
    band_hz: tuple[float, float] = (220.0, 3400.0),
    tilt_knee_hz: float = 500.0,
    tilt_slope: float = 1.5,
) -> Signal:
    """Deterministic speech-band test source.

    White Gaussian noise is amplitude-modulated with a slow two-tone envelope
    (so frame energies vary, like running speech), given a speech-like
    spectral tilt (flat up to tilt_knee_hz, then amplitude falling as
    (knee/f)^tilt_slope, i.e. -9 dB/octave in power at the defaults), and
    brick-wall band-limited. Peak-normalized to 0.99.

    The tilt matters: a low-frequency-dominated source has a wide
    correlation lobe, which lets cross-correlation features degrade smoothly
    with position offset instead of falling off a cliff after one lag.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    lo, hi = band_hz
    if not (0 < lo < hi < sample_rate / 2):
        raise ValueError(f"band {band_hz} invalid for sample rate {sample_rate}")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    noise = rng.standard_normal(n)
    t = np.arange(n) / sample_rate
    f1, f2 = rng.uniform(2.0, 4.0), rng.uniform(4.5, 6.5)
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    envelope = (0.55 + 0.45 * np.sin(2 * np.pi * f1 * t + p1)) * (
        0.55 + 0.45 * np.sin(2 * np.pi * f2 * t + p2)
    )
    spectrum = np.fft.rfft(noise * envelope)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    shape = np.ones_like(freqs)
    above = freqs > tilt_knee_hz
    shape[above] = (tilt_knee_hz / freqs[above]) ** tilt_slope
    shape[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spectrum * shape, n)
    out *= 0.99 / np.max(np.abs(out))
    return Signal(out, sample_rate)
