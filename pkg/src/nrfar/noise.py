"""Noise sources and SNR-controlled mixing.

SNR is measured over the whole file: the clean signal's mean power against the
mean power of the scaled noise. After mixing, the sum is rescaled so its peak
magnitude is 1 - 2**-15, the largest value a 16-bit WAV represents exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .dsp import AudioSignal
from .errors import ConfigError, MixingError

PEAK = 1.0 - 2.0 ** -15
CLEAN = math.inf
SNR_GRID_DB = (20.0, 15.0, 10.0, 5.0, 0.0, -5.0, -10.0, -15.0)


def snr_grid(start: float = 20.0, stop: float = -15.0, step: float = 5.0) -> tuple[float, ...]:
    n = int(round((start - stop) / step)) + 1
    return tuple(start - i * step for i in range(n))


def white_noise(length: int, seed: int = 0) -> np.ndarray:
    """Unit-variance i.i.d. Gaussian samples."""
    if length <= 0:
        raise ConfigError("noise length must be positive")
    return np.random.default_rng(seed).standard_normal(length)


def load_clips(clip_dir, sample_rate_hz: int = 2000) -> list[np.ndarray]:
    """All ``*.wav`` clips in a directory (sorted by name), resampled to ``sample_rate_hz``."""
    paths = sorted(Path(clip_dir).glob("*.wav"))
    if not paths:
        raise ConfigError(f"no WAV clips found in {clip_dir}")
    clips = [read_wav(p, expected_rate=sample_rate_hz, resample=True).samples for p in paths]
    clips = [c for c in clips if len(c)]
    if not clips:
        raise ConfigError(f"all clips in {clip_dir} are empty")
    return clips


def clip_concat_noise(clips: list[np.ndarray], length: int, seed: int = 0) -> np.ndarray:
    """Clips drawn in seeded random order without replacement, concatenated and cut to ``length``.

    When every clip has been used a fresh permutation starts the next pass.
    """
    if not clips:
        raise ConfigError("clip set is empty")
    if length <= 0:
        raise ConfigError("noise length must be positive")
    rng = np.random.default_rng(seed)
    parts, total = [], 0
    while total < length:
        for i in rng.permutation(len(clips)):
            parts.append(clips[i])
            total += len(clips[i])
            if total >= length:
                break
    return np.concatenate(parts)[:length]


@dataclass(frozen=True)
class NoiseSource:
    kind: str = "white"  # "white" or "clips"
    clip_dir: str | None = None
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("white", "clips"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == "clips" and not self.clip_dir:
            raise ConfigError("a clip noise source needs a clip directory")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return "white" if self.kind == "white" else Path(self.clip_dir).name

    def generate(self, length: int, sample_rate_hz: int = 2000, seed: int | None = None,
                 clips: list[np.ndarray] | None = None) -> np.ndarray:
        seed = self.seed if seed is None else seed
        if self.kind == "white":
            return white_noise(length, seed)
        return clip_concat_noise(clips if clips is not None else load_clips(self.clip_dir, sample_rate_hz),
                                 length, seed)


def mean_power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def snr_db(signal_part, noise_part) -> float:
    return 10.0 * math.log10(mean_power(signal_part) / mean_power(noise_part))


def normalize_peak(x, peak: float = PEAK) -> tuple[np.ndarray, float]:
    """Scale so max |x| equals ``peak`` exactly; returns (scaled, gain). Silent input is returned as is."""
    x = np.asarray(x, dtype=np.float64)
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0:
        return x.copy(), 1.0
    gain = peak / m
    y = np.clip(x * gain, -peak, peak)  # rounding can overshoot by one ulp
    i = int(np.argmax(np.abs(y)))
    y[i] = math.copysign(peak, y[i])
    return y, gain


@dataclass
class Mixture:
    audio: AudioSignal  # normalized sum
    signal_part: np.ndarray  # clean contribution, after the output gain
    noise_part: np.ndarray  # noise contribution, after the output gain
    noise_gain: float  # factor applied to the raw noise before summation
    output_gain: float  # normalization factor applied to the sum


def mix_components(signal: AudioSignal, noise, snr: float) -> Mixture:
    s = signal.samples
    if math.isinf(snr) and snr > 0:
        out, gain = normalize_peak(s)
        return Mixture(AudioSignal(out, signal.sample_rate_hz), s * gain, np.zeros_like(s), 0.0, gain)
    if math.isnan(snr) or math.isinf(snr):
        raise MixingError(f"invalid SNR {snr}")
    ps = mean_power(s)
    if ps == 0.0:
        raise MixingError("cannot mix at a finite SNR into a zero-power signal")
    n = np.asarray(noise, dtype=np.float64)
    if len(n) < len(s):
        raise MixingError(f"noise has {len(n)} samples, signal needs {len(s)}")
    n = n[:len(s)]
    pn = mean_power(n)
    if pn == 0.0:
        raise MixingError("noise has zero power")
    g = math.sqrt(ps / (pn * 10.0 ** (snr / 10.0)))
    scaled = n * g
    out, gain = normalize_peak(s + scaled)
    return Mixture(AudioSignal(out, signal.sample_rate_hz), s * gain, scaled * gain, g, gain)


def mix_at_snr(signal: AudioSignal, noise: NoiseSource | np.ndarray, snr: float, seed: int | None = None,
               clips: list[np.ndarray] | None = None) -> AudioSignal:
    """Add noise at ``snr`` dB (``CLEAN`` = no noise) and peak-normalize the result."""
    if isinstance(noise, NoiseSource):
        if math.isinf(snr) and snr > 0:
            return mix_components(signal, None, snr).audio
        noise = noise.generate(len(signal), signal.sample_rate_hz, seed=seed, clips=clips)
    return mix_components(signal, noise, snr).audio
