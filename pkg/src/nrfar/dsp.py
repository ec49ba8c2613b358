"""Bottom-level signal processing: band-pass, power, envelope and frame energy.

All stages are causal and carry their state between calls, so feeding a
recording in chunks of any size gives bit-identical outputs to a single call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate_hz: int = 2000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("audio must be mono (1-D samples)")
        if int(self.sample_rate_hz) != self.sample_rate_hz or self.sample_rate_hz <= 0:
            raise ConfigError(f"sample rate must be a positive integer, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)
        if not np.all(np.isfinite(self.samples)):
            raise DataError("audio samples must be finite")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class BandPassConfig:
    low_cut_hz: float = 100.0
    high_cut_hz: float = 800.0

    def validate(self, sample_rate_hz: float) -> None:
        if not (0 < self.low_cut_hz < self.high_cut_hz < sample_rate_hz / 2):
            raise ConfigError(
                f"band-pass cutoffs must satisfy 0 < low < high < fs/2; got "
                f"({self.low_cut_hz}, {self.high_cut_hz}) at fs={sample_rate_hz}"
            )


@dataclass(frozen=True)
class DspConfig:
    sample_rate_hz: int = 2000
    sub_rate_hz: int = 150
    band: BandPassConfig = field(default_factory=BandPassConfig)
    envelope_tau_s: float = 0.040

    def validate(self) -> None:
        if self.sample_rate_hz <= 0 or self.sub_rate_hz <= 0:
            raise ConfigError("sampling rates must be positive")
        if self.sub_rate_hz > self.sample_rate_hz:
            raise ConfigError("sub-sampling rate f_s cannot exceed input rate f_i")
        if self.envelope_tau_s <= 0:
            raise ConfigError("envelope time constant must be positive")
        self.band.validate(self.sample_rate_hz)


def bandpass_coefficients(cfg: BandPassConfig, sample_rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """Single-biquad Butterworth band-pass, bilinear transform with both edges prewarped.

    The analog prototype is H(s) = B s / (s^2 + B s + W0^2) with B = Wh - Wl
    and W0^2 = Wl Wh, so the digital response is exactly -3 dB at both cutoffs.
    """
    cfg.validate(sample_rate_hz)
    k = 2.0 * sample_rate_hz
    wl = k * math.tan(math.pi * cfg.low_cut_hz / sample_rate_hz)
    wh = k * math.tan(math.pi * cfg.high_cut_hz / sample_rate_hz)
    bw = wh - wl
    w0sq = wl * wh
    a0 = k * k + bw * k + w0sq
    b = np.array([bw * k, 0.0, -bw * k]) / a0
    a = np.array([1.0, (2.0 * w0sq - 2.0 * k * k) / a0, (k * k - bw * k + w0sq) / a0])
    return b, a


def frame_bounds(n_frames: int, f_i: int, f_s: int, first: int = 0) -> np.ndarray:
    """Start sample of frames ``first .. first+n_frames`` (inclusive end marker).

    Frame j covers samples [floor(j f_i / f_s), floor((j+1) f_i / f_s)), which at
    2000/150 Hz gives the repeating 13, 13, 14 pattern: 150 frames per 2000 samples.
    """
    j = np.arange(first, first + n_frames + 1, dtype=np.int64)
    return (j * f_i) // f_s


def band_pass(signal: AudioSignal, cfg: BandPassConfig | None = None) -> AudioSignal:
    cfg = cfg or BandPassConfig()
    b, a = bandpass_coefficients(cfg, signal.sample_rate_hz)
    return AudioSignal(lfilter(b, a, signal.samples), signal.sample_rate_hz)


def instantaneous_power(x) -> np.ndarray:
    if isinstance(x, AudioSignal):
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    return x * x


def _check_rates(f_i: int, f_s: int) -> None:
    if f_s <= 0 or f_i <= 0:
        raise ConfigError("sampling rates must be positive")
    if f_s > f_i:
        raise ConfigError("sub-sampling rate f_s cannot exceed input rate f_i")


def complete_frames(n_samples: int, f_i: int, f_s: int) -> int:
    """Frames whose last sample is among the first ``n_samples`` (frame m ends at floor(m*f_i/f_s))."""
    return ((n_samples + 1) * f_s - 1) // f_i


def envelope(power, f_i: int = 2000, f_s: int = 150, tau_s: float = 0.040) -> np.ndarray:
    """Single-pole low-pass of the power stream, decimated to ``f_s``.

    The decimated value of frame j is the smoothed power at the last sample of
    that frame (same schedule as :func:`frame_energy`).
    """
    _check_rates(f_i, f_s)
    power = np.asarray(power, dtype=np.float64)
    smoothed = lfilter(*_ema_coefficients(tau_s, f_i), power)
    n_frames = complete_frames(len(power), f_i, f_s)
    ends = frame_bounds(n_frames, f_i, f_s)[1:] - 1
    return smoothed[ends]


def frame_energy(power, f_i: int = 2000, f_s: int = 150) -> np.ndarray:
    _check_rates(f_i, f_s)
    power = np.asarray(power, dtype=np.float64)
    n_frames = complete_frames(len(power), f_i, f_s)
    return _frame_sums(power, frame_bounds(n_frames, f_i, f_s))


def _ema_coefficients(tau_s: float, f_i: float) -> tuple[np.ndarray, np.ndarray]:
    if tau_s <= 0:
        raise ConfigError("envelope time constant must be positive")
    alpha = 1.0 - math.exp(-1.0 / (tau_s * f_i))
    return np.array([alpha]), np.array([1.0, alpha - 1.0])


def _frame_sums(power: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Sum ``power`` over [bounds[j], bounds[j+1]) relative to bounds[0].

    Accumulates column by column over a zero-padded (frames x max_len) matrix
    so every frame is summed in the same order no matter where it sits.
    """
    n = len(bounds) - 1
    if n <= 0:
        return np.zeros(0)
    rel = bounds - bounds[0]
    lengths = np.diff(rel)
    width = int(lengths.max())
    mat = np.zeros((n, width))
    cols = np.arange(width)
    mask = cols[None, :] < lengths[:, None]
    idx = rel[:-1, None] + cols[None, :]
    mat[mask] = power[idx[mask]]
    acc = mat[:, 0].copy()
    for c in range(1, width):
        acc = acc + mat[:, c]
    return acc


@dataclass
class DerivedSignals:
    power: np.ndarray
    envelope: np.ndarray
    energy: np.ndarray
    f_i: int = 2000
    f_s: int = 150
    first_frame: int = 0

    def __post_init__(self):
        if len(self.envelope) != len(self.energy):
            raise ValueError("envelope and energy must be aligned")


class SignalProcessor:
    """Streaming bottom level: audio chunks in, derived streams out."""

    def __init__(self, cfg: DspConfig | None = None):
        self.cfg = cfg or DspConfig()
        self.cfg.validate()
        self._b, self._a = bandpass_coefficients(self.cfg.band, self.cfg.sample_rate_hz)
        self._eb, self._ea = _ema_coefficients(self.cfg.envelope_tau_s, self.cfg.sample_rate_hz)
        self.reset()

    def reset(self) -> None:
        self._zi_bp = np.zeros(2)
        self._zi_ema = np.zeros(1)
        self._pending = np.zeros(0)  # power samples of the frame under construction
        self._n_samples = 0
        self._n_frames = 0

    @property
    def frames_emitted(self) -> int:
        return self._n_frames

    def process(self, chunk) -> DerivedSignals:
        f_i, f_s = self.cfg.sample_rate_hz, self.cfg.sub_rate_hz
        x = np.asarray(chunk.samples if isinstance(chunk, AudioSignal) else chunk, dtype=np.float64)
        if x.ndim != 1:
            raise ConfigError("audio chunk must be 1-D")
        first = self._n_frames
        n0 = self._n_samples
        y, self._zi_bp = lfilter(self._b, self._a, x, zi=self._zi_bp)
        power = y * y
        smoothed, self._zi_ema = lfilter(self._eb, self._ea, power, zi=self._zi_ema)
        total = n0 + len(x)
        n_frames = complete_frames(total, f_i, f_s) - first
        bounds = frame_bounds(n_frames, f_i, f_s, first)
        env = smoothed[bounds[1:] - 1 - n0]
        buf = np.concatenate([self._pending, power])
        energy = _frame_sums(buf, bounds)
        consumed = int(bounds[-1] - bounds[0])
        self._pending = buf[consumed:].copy()
        self._n_samples = total
        self._n_frames += n_frames
        return DerivedSignals(power, env, energy, f_i, f_s, first)


def derive(signal: AudioSignal, cfg: DspConfig | None = None) -> DerivedSignals:
    cfg = cfg or DspConfig(sample_rate_hz=signal.sample_rate_hz)
    if cfg.sample_rate_hz != signal.sample_rate_hz:
        raise ConfigError(
            f"signal is at {signal.sample_rate_hz} Hz but the pipeline expects {cfg.sample_rate_hz} Hz"
        )
    return SignalProcessor(cfg).process(signal.samples)


def write_derived_csv(path, derived: DerivedSignals) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "time_s", "envelope", "energy"])
        for k, (e, en) in enumerate(zip(derived.envelope, derived.energy)):
            tick = derived.first_frame + k
            w.writerow([tick, repr(tick / derived.f_s), repr(float(e)), repr(float(en))])
