"""Image-source room impulse responses and multichannel capture synthesis.

The simulator mirrors the source across the six shoebox surfaces (standard
rigid-image enumeration), attenuates each image by (1 - absorption) per
reflection and by 1/(4*pi*distance) spreading, and quantizes arrivals to the
nearest sample by default. Captures are the convolution of a source signal
with each microphone's impulse response plus independent per-channel white
Gaussian noise at a controlled SNR.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .audio import Signal
from .geometry import RoomSpec, _as_vec3

# RIR tail length as a multiple of T60; long enough that a backward-integrated
# decay curve is clean past -35 dB.
_TAIL_FACTOR = 1.25


@dataclass(frozen=True)
class AcousticEnv:
    """Reverberation and noise settings for one simulated environment.

    absorption None means "derive from t60" (see absorption_for_decay);
    snr_db None (or +inf) disables noise. noise_seed makes the per-channel
    noise streams reproducible.
    """

    t60: float = 0.0
    absorption: float | None = None
    snr_db: float | None = None
    noise_seed: int = 0

    def __post_init__(self):
        if self.t60 < 0:
            raise ValueError("t60 must be >= 0")
        if self.absorption is not None and not (0.0 < self.absorption <= 1.0):
            raise ValueError(f"absorption {self.absorption} outside (0, 1]")

    @property
    def noiseless(self) -> bool:
        return self.snr_db is None or math.isinf(self.snr_db)


@dataclass(frozen=True)
class Rir:
    """Sampled room impulse response."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("taps must be a non-empty 1-D array")
        if not np.all(np.isfinite(t)):
            raise ValueError("taps contain non-finite values")
        object.__setattr__(self, "taps", t)


@dataclass(frozen=True)
class CaptureSet:
    """Aligned multichannel capture, shape (M, n_samples)."""

    channels: np.ndarray
    sample_rate: int

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2 or ch.shape[0] < 1 or ch.shape[1] < 1:
            raise ValueError("channels must be a non-empty (M, n) array")
        object.__setattr__(self, "channels", ch)

    @property
    def count(self) -> int:
        return self.channels.shape[0]


def absorption_from_t60(room: RoomSpec, t60: float) -> float:
    """Sabine estimate alpha = 0.161 * V / (S * t60), clamped to (0, 1].

    Useful for reporting a nominal surface absorption; the simulation path
    derives its coefficient with absorption_for_decay instead, which is
    consistent with the per-reflection amplitude model actually applied.
    """
    if t60 <= 0:
        raise ValueError("t60 must be positive (t60 = 0 is the anechoic path)")
    volume = float(np.prod(room.dims))
    surface = 2.0 * float(
        room.dims[0] * room.dims[1]
        + room.dims[1] * room.dims[2]
        + room.dims[0] * room.dims[2]
    )
    return min(1.0, 0.161 * volume / (surface * t60))


# Decay-curve fit window shared by the calibration model and by band-limited
# backward-integration measurements of the generated responses.
T60_FIT_RANGE_DB = (-5.0, -35.0)


@functools.lru_cache(maxsize=8)
def _unit_decay_t60(dims: tuple[float, float, float], sound_speed: float) -> float:
    """Fitted decay time of the image model for unit per-bounce energy exponent.

    An image reached along direction u accumulates |u_x|/L_x + |u_y|/L_y +
    |u_z|/L_z reflections per meter, so for per-bounce energy g the late
    field is a direction mixture of exponentials exp(-(-ln g) m(u) c t). The
    mixture is exactly time-rescaled by -ln g, so fitting the unit curve once
    (same dB window as the measurement) calibrates every target.
    """
    nodes, weights = np.polynomial.legendre.leggauss(64)
    cos_t = 0.5 * (nodes + 1.0)
    w_t = 0.5 * weights
    phi = 0.25 * math.pi * (nodes + 1.0)
    w_p = 0.25 * math.pi * weights
    sin_t = np.sqrt(1.0 - cos_t**2)
    ux = sin_t[:, None] * np.cos(phi)[None, :]
    uy = sin_t[:, None] * np.sin(phi)[None, :]
    uz = cos_t[:, None] * np.ones_like(phi)[None, :]
    m = ux / dims[0] + uy / dims[1] + uz / dims[2]
    rate = (m * sound_speed).ravel()
    w = (w_t[:, None] * w_p[None, :]).ravel()
    w /= w.sum()
    t = np.linspace(0.0, 30.0 / rate.min(), 8000)
    decay = np.empty_like(t)
    for start in range(0, t.size, 256):  # chunked: the full outer product is huge
        block = t[start:start + 256, None]
        decay[start:start + 256] = (
            (w[None, :] / rate[None, :]) * np.exp(-rate[None, :] * block)
        ).sum(axis=1)
    curve_db = 10.0 * np.log10(decay / decay[0])
    mask = (curve_db <= T60_FIT_RANGE_DB[0]) & (curve_db >= T60_FIT_RANGE_DB[1])
    slope = np.polyfit(t[mask], curve_db[mask], 1)[0]
    return -60.0 / slope


def absorption_for_decay(room: RoomSpec, t60: float) -> float:
    """Absorption such that the simulated response decays 60 dB in t60 seconds.

    Inverts the direction-averaged decay of this simulator's amplitude model
    (amplitude (1 - alpha) per reflection), using the same decay-curve fit
    window as a band-limited backward-integration measurement. Unlike the
    Sabine estimate this stays in (0, 1) for any positive target.
    """
    if t60 <= 0:
        raise ValueError("t60 must be positive")
    neg_ln_g = _unit_decay_t60(tuple(float(d) for d in room.dims), room.sound_speed) / t60
    return 1.0 - math.exp(-neg_ln_g / 2.0)


def effective_absorption(room: RoomSpec, env: AcousticEnv) -> float | None:
    """Absorption used by the simulator: explicit value wins, else derived."""
    if env.absorption is not None:
        return env.absorption
    if env.t60 > 0:
        return absorption_for_decay(room, env.t60)
    return None


@functools.lru_cache(maxsize=4)
def _image_lattice(lattice_n: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mirror-index arrays (n, q) and total reflection order per image.

    n ranges over [-N, N] per axis, q over {0, 1}; image coordinate along an
    axis is (1 - 2q)*source + 2*n*L, with |n - q| reflections off the near
    wall and |n| off the far wall.
    """
    axes_n = [np.arange(-nmax, nmax + 1, dtype=np.int32) for nmax in lattice_n]
    nx, ny, nz = np.meshgrid(*axes_n, indexing="ij")
    qx, qy, qz = np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij")
    n = np.stack([a.ravel() for a in (nx, ny, nz)], axis=1)
    q = np.stack([a.ravel().astype(np.int32) for a in (qx, qy, qz)], axis=1)
    n = np.repeat(n, 8, axis=0)
    q = np.tile(q, (nx.size, 1))
    order = (np.abs(n - q) + np.abs(n)).sum(axis=1)
    return n, q, order


def _require_inside(room: RoomSpec, p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or np.any(p > room.dims):
        raise ValueError(f"{what} at {p} is outside the room {room.dims}")


def compute_rirs(
    room: RoomSpec,
    env: AcousticEnv,
    source,
    mics,
    max_order: int | None = None,
    frac_delay: bool = False,
) -> list[Rir]:
    """Impulse responses from one source to each microphone.

    All returned responses share one length so the resulting capture channels
    stay aligned. max_order drops images with more than that many total
    reflections (the anechoic direct path is order 0). frac_delay replaces
    nearest-sample rounding with a windowed-sinc fractional delay.
    """
    src = _as_vec3(source, "source")
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    if mics.shape[1] != 3:
        raise ValueError(f"mics must be (M, 3), got {mics.shape}")
    _require_inside(room, src, "source")
    for m in mics:
        _require_inside(room, m, "microphone")
    direct = np.linalg.norm(mics - src, axis=1)
    if np.any(direct == 0):
        raise ValueError("source coincides with a microphone")

    fs = room.sample_rate
    c = room.sound_speed
    tail_s = _TAIL_FACTOR * env.t60
    n_taps = int(round((direct.max() / c + tail_s) * fs)) + 1
    alpha = effective_absorption(room, env)

    if alpha is None:  # anechoic: direct impulse only
        out = []
        for d in direct:
            taps = np.zeros(n_taps)
            _deposit(taps, np.array([d]), np.array([1.0 / (4.0 * math.pi * d)]),
                     fs, c, frac_delay)
            out.append(Rir(taps, fs))
        return out

    reach = c * (n_taps / fs)
    lattice_n = tuple(int(math.ceil(reach / (2.0 * room.dims[a]))) + 1 for a in range(3))
    n, q, order = _image_lattice(lattice_n)
    if max_order is not None:
        keep = order <= max_order
        n, q, order = n[keep], q[keep], order[keep]
    images = (1 - 2 * q) * src + 2 * n * room.dims
    gains = np.power(1.0 - alpha, order.astype(float))

    out = []
    for m in mics:
        dist = np.linalg.norm(images - m, axis=1)
        within = dist <= reach
        amp = gains[within] / (4.0 * math.pi * dist[within])
        taps = np.zeros(n_taps)
        _deposit(taps, dist[within], amp, fs, c, frac_delay)
        out.append(Rir(taps, fs))
    return out


def compute_rir(
    room: RoomSpec,
    env: AcousticEnv,
    source,
    mic,
    max_order: int | None = None,
    frac_delay: bool = False,
) -> Rir:
    """Single-microphone convenience wrapper around compute_rirs."""
    return compute_rirs(room, env, source, [mic], max_order, frac_delay)[0]


_SINC_HALF_WIDTH = 16  # samples each side for the fractional-delay kernel


def _deposit(taps, dist, amp, fs, c, frac_delay):
    delays = dist * fs / c
    if not frac_delay:
        idx = np.rint(delays).astype(np.int64)
        ok = (idx >= 0) & (idx < taps.size)
        taps += np.bincount(idx[ok], weights=amp[ok], minlength=taps.size)
        return
    # Hann-windowed sinc centered on the fractional arrival (chunked to bound memory)
    w = _SINC_HALF_WIDTH
    for start in range(0, delays.size, 65536):
        d = delays[start:start + 65536]
        a = amp[start:start + 65536]
        base = np.floor(d).astype(np.int64)
        offsets = np.arange(-w, w + 1)
        idx = base[:, None] + offsets[None, :]
        t = idx - d[:, None]
        kernel = 0.5 * (1.0 + np.cos(np.pi * t / w)) * np.sinc(0.9 * t)
        ok = (idx >= 0) & (idx < taps.size)
        taps += np.bincount(
            idx[ok].ravel(), weights=(a[:, None] * kernel)[ok].ravel(),
            minlength=taps.size,
        )


def simulate_capture(source_signal: Signal, rirs: list[Rir], env: AcousticEnv) -> CaptureSet:
    """Convolve the source with each response and add per-channel noise.

    Noise is white Gaussian, independent across channels, scaled so each
    channel's ratio of reverberant-signal power to noise power over the full
    convolved support equals env.snr_db exactly. Deterministic given
    env.noise_seed.
    """
    if not rirs:
        raise ValueError("need at least one impulse response")
    fs = source_signal.sample_rate
    for h in rirs:
        if h.sample_rate != fs:
            raise ValueError(
                f"sample-rate mismatch: signal {fs} Hz vs RIR {h.sample_rate} Hz"
            )
    max_len = max(h.taps.size for h in rirs)
    padded = np.zeros((len(rirs), max_len))
    for i, h in enumerate(rirs):
        padded[i, : h.taps.size] = h.taps
    channels = sps.fftconvolve(
        source_signal.samples[None, :], padded, axes=1
    ) if max_len > 1 else source_signal.samples[None, :] * padded

    if not env.noiseless:
        seeds = np.random.SeedSequence(env.noise_seed).spawn(len(rirs))
        target_ratio = 10.0 ** (env.snr_db / 10.0)
        for i in range(len(rirs)):
            p_sig = float(np.mean(channels[i] ** 2))
            if p_sig == 0.0:
                raise ValueError(f"channel {i} is silent; SNR target is undefined")
            raw = np.random.default_rng(seeds[i]).standard_normal(channels.shape[1])
            raw *= math.sqrt(p_sig / target_ratio / float(np.mean(raw ** 2)))
            channels[i] += raw
    return CaptureSet(channels, fs)
