"""Cross-correlation features for multichannel captures.

Per microphone pair, each frame's cross correlation is evaluated at a small
set of integer lags around zero; frames are weighted by their in-window
correlation energy (loud, coherent frames count more than silence) and
summed, and the per-pair lag vectors are concatenated into one feature
vector in fixed pair order.

Two spectral weightings are provided. "plain" normalizes the raw cross
correlation by the frame energies; the lag vector then traces the source's
correlation shape, which degrades smoothly as the true delay moves — the
property the kernel classifier interpolates on. "phat" whitens the cross
spectrum to unit magnitude; its one-sample peak is ideal for reading off a
delay, but as a similarity feature it saturates after a single lag of
mismatch, so it is not the default here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .roomsim import CaptureSet

EPS = 1e-12

CC_WEIGHTINGS = ("plain", "phat")


@dataclass(frozen=True)
class FrameSpec:
    """Framing parameters. The hop frame_len*(1-overlap) must be an integer."""

    frame_len: int = 512
    overlap: float = 0.625
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len < 2:
            raise ValueError("frame_len must be >= 2")
        if not (0.0 <= self.overlap < 1.0):
            raise ValueError("overlap must be in [0, 1)")
        hop = self.frame_len * (1.0 - self.overlap)
        if abs(hop - round(hop)) > 1e-9 or round(hop) < 1:
            raise ValueError(
                f"frame_len {self.frame_len} with overlap {self.overlap} gives "
                f"non-integer hop {hop}"
            )
        get_window(self.window, self.frame_len)  # validates the window name

    @property
    def hop(self) -> int:
        return int(round(self.frame_len * (1.0 - self.overlap)))


@dataclass(frozen=True)
class GccFeature:
    """Concatenated per-pair lag vectors: D = pair_count * lags_per_pair."""

    values: np.ndarray
    pair_count: int
    lags_per_pair: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("feature values must be 1-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature contains non-finite values")
        if v.size != self.pair_count * self.lags_per_pair:
            raise ValueError(
                f"feature length {v.size} != pair_count {self.pair_count} * "
                f"lags_per_pair {self.lags_per_pair}"
            )
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size

    def pair_block(self, pair_index: int) -> np.ndarray:
        return self.values[
            pair_index * self.lags_per_pair:(pair_index + 1) * self.lags_per_pair
        ]


def mic_pairs(count: int) -> list[tuple[int, int]]:
    """Lexicographic channel pairs (0,1), (0,2), ..., (M-2, M-1)."""
    return [(i, j) for i in range(count) for j in range(i + 1, count)]


def lag_indices(lags_per_pair: int, mode: str = "centered") -> np.ndarray:
    """Integer lags evaluated per pair: centered on zero by default, or the
    nonnegative lags 0..L-1."""
    if lags_per_pair < 1:
        raise ValueError("lags_per_pair must be >= 1")
    if mode == "centered":
        half = lags_per_pair // 2
        return np.arange(-half, lags_per_pair - half)
    if mode == "nonnegative":
        return np.arange(lags_per_pair)
    raise ValueError(f"unknown lag mode {mode!r}")


def frame_signal(samples, spec: FrameSpec) -> np.ndarray:
    """Split into windowed frames, (F, frame_len); trailing partial dropped."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < spec.frame_len:
        raise ValueError(
            f"signal of length {x.size} is shorter than one frame ({spec.frame_len})"
        )
    n_frames = 1 + (x.size - spec.frame_len) // spec.hop
    idx = np.arange(spec.frame_len)[None, :] + spec.hop * np.arange(n_frames)[:, None]
    return x[idx] * get_window(spec.window, spec.frame_len)[None, :]


def _fft_len(frame_len: int) -> int:
    n = 1
    while n < 2 * frame_len:
        n *= 2
    return n


def _cross_correlate(spec_a, spec_b, energy_a, energy_b, n, weighting):
    """Correlation of frame batches from their spectra, full circular length n.

    Positive lag (small positive index) means b is delayed relative to a.
    """
    cross = spec_b * np.conj(spec_a)
    if weighting == "phat":
        cross = cross / np.maximum(np.abs(cross), EPS)
        return np.fft.irfft(cross, n, axis=-1)
    if weighting == "plain":
        cc = np.fft.irfft(cross, n, axis=-1)
        norm = np.maximum(np.sqrt(energy_a * energy_b), EPS)
        return cc / norm[..., None]
    raise ValueError(f"unknown cc weighting {weighting!r}; use one of {CC_WEIGHTINGS}")


def gcc_pair(
    frame_a,
    frame_b,
    lags_per_pair: int,
    lag_mode: str = "centered",
    weighting: str = "plain",
) -> np.ndarray:
    """Cross correlation of two frames at integer lags.

    Positive lag means frame_b is delayed relative to frame_a. Zero-energy
    input yields an all-zero lag vector (silence carries no delay evidence).
    """
    a = np.asarray(frame_a, dtype=float)
    b = np.asarray(frame_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"frames must be equal-length 1-D arrays, got {a.shape} vs {b.shape}")
    n = _fft_len(a.size)
    cc = _cross_correlate(
        np.fft.rfft(a, n), np.fft.rfft(b, n),
        float(a @ a), float(b @ b), n, weighting,
    )
    return cc[lag_indices(lags_per_pair, lag_mode) % n]


def frame_weights(per_frame_gccs, gamma: float = 2.0) -> np.ndarray:
    """Frame weights proportional to sum_l |gcc|^gamma, normalized to sum 1.

    All-silent input (zero denominator) degrades to uniform weights.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    g = np.asarray(per_frame_gccs, dtype=float)
    if g.ndim != 2 or g.shape[0] < 1:
        raise ValueError("per_frame_gccs must be (n_frames, n_lags)")
    scores = np.sum(np.abs(g) ** gamma, axis=1)
    total = scores.sum()
    if total == 0.0:
        return np.full(g.shape[0], 1.0 / g.shape[0])
    return scores / total


def gcc_feature(
    capture: CaptureSet,
    spec: FrameSpec,
    gamma: float = 2.0,
    lags_per_pair: int = 16,
    lag_mode: str = "centered",
    weighting: str = "plain",
) -> GccFeature:
    """Feature vector for one capture: weighted frame-summed correlation lags
    for every channel pair, concatenated in mic_pairs order."""
    if capture.count < 2:
        raise ValueError("need at least 2 channels")
    frames = np.stack([frame_signal(ch, spec) for ch in capture.channels])
    n = _fft_len(spec.frame_len)
    spectra = np.fft.rfft(frames, n, axis=2)
    energies = np.sum(frames**2, axis=2)
    lag_idx = lag_indices(lags_per_pair, lag_mode) % n
    blocks = []
    for i, j in mic_pairs(capture.count):
        cc = _cross_correlate(
            spectra[i], spectra[j], energies[i], energies[j], n, weighting
        )[:, lag_idx]
        blocks.append(frame_weights(cc, gamma) @ cc)
    return GccFeature(np.concatenate(blocks), len(blocks), lags_per_pair)
