"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .dsp import AudioSignal
from .errors import DataError

FULL_SCALE = 32768.0


def read_wav(path, expected_rate: int | None = None, resample: bool = False) -> AudioSignal:
    """Read a 16-bit mono WAV, samples scaled to [-1, 1) by 1/32768.

    With ``resample=True`` a file at a rate other than ``expected_rate`` is
    brought to that rate with a polyphase resampler.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / FULL_SCALE
    if expected_rate is not None and rate != expected_rate:
        if not resample:
            raise DataError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
        g = np.gcd(int(rate), int(expected_rate))
        samples = resample_poly(samples, expected_rate // g, rate // g)
        rate = expected_rate
    return AudioSignal(samples, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * FULL_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(path, signal: AudioSignal) -> None:
    pcm = to_pcm16(signal.samples)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(signal.sample_rate_hz)
        fh.writeframes(pcm.tobytes())
