"""Labeled synthetic foraging recordings.

Stands in for field recordings: JM sounds are short tonal bursts whose
duration, attack shape and lobe count differ by class, placed on a jittered
regular grid inside scripted activity bouts, over a white background floor.
Rumination bouts alternate chewing periods with short cud-swallowing pauses.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .activity import ActivityLabel, Bout
from .audio_io import read_wav, write_wav
from .dsp import AudioSignal
from .errors import ConfigError
from .jm import JmClass


@dataclass(frozen=True)
class JmTemplate:
    duration_s: float
    attack_frac: float  # share of a lobe spent rising
    amplitude: float
    freq_range_hz: tuple[float, float]
    lobes: int = 1
    dip_s: float = 0.0  # quiet-ish gap between lobes
    dip_depth: float = 0.3  # amplitude kept inside the dip
    jitter: float = 0.15  # relative spread of duration and amplitude


DEFAULT_TEMPLATES: dict[str, JmTemplate] = {
    JmClass.RUMINATION_CHEW.label: JmTemplate(0.30, 0.45, 0.45, (150.0, 350.0)),
    JmClass.GRAZING_CHEW.label: JmTemplate(0.16, 0.12, 0.50, (200.0, 500.0)),
    JmClass.BITE.label: JmTemplate(0.09, 0.30, 0.70, (300.0, 700.0)),
    JmClass.CHEW_BITE.label: JmTemplate(0.36, 0.25, 0.60, (200.0, 600.0), lobes=2, dip_s=0.04),
}

# JM class mixtures per activity (class label -> probability)
DEFAULT_MIXTURES: dict[str, dict[str, float]] = {
    ActivityLabel.GRAZING.label: {"grazing-chew": 0.5, "bite": 0.25, "chew-bite": 0.25},
    ActivityLabel.RUMINATION.label: {"rumination-chew": 0.95, "grazing-chew": 0.05},
    ActivityLabel.OTHER.label: {},
}

DEFAULT_RATES: dict[str, tuple[float, float]] = {
    ActivityLabel.GRAZING.label: (0.75, 1.0),
    ActivityLabel.RUMINATION.label: (0.95, 1.2),
}


@dataclass
class SyntheticCorpusSpec:
    script: list[tuple[str, float]]  # (activity label, bout duration in s)
    seed: int = 0
    sample_rate_hz: int = 2000
    floor_rms: float = 0.005
    templates: dict[str, JmTemplate] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    mixtures: dict[str, dict[str, float]] = field(default_factory=lambda: dict(DEFAULT_MIXTURES))
    rates: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RATES))
    rate: float | None = None  # fixed JM rate overriding the per-activity ranges
    schedule_jitter: float = 0.10  # onset jitter, fraction of the period
    chew_period_s: tuple[float, float] = (40.0, 60.0)
    swallow_pause_s: tuple[float, float] = (3.0, 6.0)

    def validate(self) -> None:
        for label, dur in self.script:
            ActivityLabel.from_label(label)
            if dur <= 0:
                raise ConfigError("bout durations must be positive")
        for lo, hi in list(self.rates.values()) + ([(self.rate, self.rate)] if self.rate else []):
            if not 0.75 - 1e-9 <= lo <= hi <= 1.20 + 1e-9:
                raise ConfigError(f"JM rates must lie in [0.75, 1.20] per second, got ({lo}, {hi})")
        for mix in self.mixtures.values():
            if mix and abs(sum(mix.values()) - 1.0) > 1e-9:
                raise ConfigError("class mixture probabilities must sum to 1")
        if self.sample_rate_hz <= 0 or self.floor_rms < 0:
            raise ConfigError("invalid sample rate or floor level")
        if not 0 <= self.schedule_jitter < 0.5:
            raise ConfigError("schedule jitter must be in [0, 0.5)")


@dataclass(frozen=True)
class TruthEvent:
    start_s: float
    end_s: float
    jm_class: JmClass


@dataclass
class SyntheticRecording:
    audio: AudioSignal
    bouts: list[Bout]
    events: list[TruthEvent]
    name: str = "rec"

    @property
    def duration_s(self) -> float:
        return self.audio.duration_s


def _raised_cosine_lobe(n: int, attack_frac: float) -> np.ndarray:
    n_up = max(1, int(round(n * attack_frac)))
    n_down = max(1, n - n_up)
    up = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_up) / n_up)
    down = 0.5 + 0.5 * np.cos(np.pi * np.arange(1, n_down + 1) / n_down)
    return np.concatenate([up, down])[:n]


def render_jm(template: JmTemplate, rng: np.random.Generator, fs: int) -> np.ndarray:
    """One JM burst: tonal carrier under a raised-cosine (possibly two-lobed) envelope."""
    scale = 1.0 + template.jitter * rng.uniform(-1.0, 1.0)
    dur = template.duration_s * scale
    amp = template.amplitude * (1.0 + template.jitter * rng.uniform(-1.0, 1.0))
    n = max(4, int(round(dur * fs)))
    if template.lobes == 1:
        env = _raised_cosine_lobe(n, template.attack_frac)
    else:
        n_dip = int(round(template.dip_s * scale * fs))
        n_lobe = max(2, (n - n_dip * (template.lobes - 1)) // template.lobes)
        lobe = _raised_cosine_lobe(n_lobe, template.attack_frac)
        parts = [lobe]
        for _ in range(template.lobes - 1):
            parts += [np.zeros(n_dip), lobe]
        env = np.concatenate(parts)
        # hold a partial level between lobe peaks so the lobes stay one JM
        env[n_lobe // 2:len(env) - n_lobe // 2] = np.maximum(
            env[n_lobe // 2:len(env) - n_lobe // 2], template.dip_depth)
        n = len(env)
    t = np.arange(n) / fs
    lo, hi = template.freq_range_hz
    freqs = rng.uniform(lo, hi, 3)
    phases = rng.uniform(0, 2 * np.pi, 3)
    carrier = np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]).sum(axis=0) / 3.0
    return amp * env * carrier


def _schedule(t0: float, t1: float, rate: float, jitter: float, rng: np.random.Generator) -> np.ndarray:
    period = 1.0 / rate
    n = int(math.floor((t1 - t0) * rate))
    base = t0 + period * (np.arange(n) + 0.5)
    return base + rng.uniform(-jitter, jitter, n) * period


def synth_corpus(spec: SyntheticCorpusSpec, name: str = "rec") -> SyntheticRecording:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fs = spec.sample_rate_hz
    total = sum(d for _, d in spec.script)
    n_total = int(round(total * fs))
    x = rng.standard_normal(n_total) * spec.floor_rms
    bouts: list[Bout] = []
    events: list[TruthEvent] = []
    t = 0.0
    for label, dur in spec.script:
        act = ActivityLabel.from_label(label)
        bouts.append(Bout(t, t + dur, act))
        mix = spec.mixtures.get(act.label, {})
        if mix:
            lo, hi = (spec.rate, spec.rate) if spec.rate else spec.rates[act.label]
            rate = rng.uniform(lo, hi)
            # chewing stretches; rumination pauses between cuds
            stretches = []
            if act == ActivityLabel.RUMINATION:
                s = t
                while s < t + dur:
                    e = min(t + dur, s + rng.uniform(*spec.chew_period_s))
                    stretches.append((s, e))
                    s = e + rng.uniform(*spec.swallow_pause_s)
            else:
                stretches.append((t, t + dur))
            names = list(mix)
            probs = np.array([mix[k] for k in names])
            for s, e in stretches:
                for onset in _schedule(s, e, rate, spec.schedule_jitter, rng):
                    klass = JmClass.from_label(names[rng.choice(len(names), p=probs)])
                    burst = render_jm(spec.templates[klass.label], rng, fs)
                    i0 = int(round(onset * fs))
                    i1 = i0 + len(burst)
                    if i0 < int(round(t * fs)) or i1 > min(n_total, int(round((t + dur) * fs))):
                        continue
                    x[i0:i1] += burst
                    events.append(TruthEvent(i0 / fs, i1 / fs, klass))
        t += dur
    return SyntheticRecording(AudioSignal(x, fs), bouts, events, name)


def random_script(duration_s: float, rng: np.random.Generator,
                  activity_s: tuple[float, float] = (1800.0, 4800.0),
                  other_s: tuple[float, float] = (1200.0, 3000.0)) -> list[tuple[str, float]]:
    """Alternating bouts where grazing and rumination are always separated by 'other'."""
    script = []
    t = 0.0
    current = rng.choice(["grazing", "rumination", "other"])
    last_active = None
    while t < duration_s - 1e-9:
        span = other_s if current == "other" else activity_s
        d = min(rng.uniform(*span), duration_s - t)
        script.append((str(current), float(d)))
        t += d
        if current == "other":
            options = ["grazing", "rumination"]
            current = options[rng.integers(2)] if last_active is None else (
                "rumination" if last_active == "grazing" else "grazing")
        else:
            last_active = current
            current = "other"
    return script


def make_corpus(n_recordings: int, duration_s: float, seed: int = 0, **spec_kw) -> list[SyntheticRecording]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_recordings):
        script = random_script(duration_s, rng)
        spec = SyntheticCorpusSpec(script=script, seed=int(rng.integers(2**31)), **spec_kw)
        out.append(synth_corpus(spec, name=f"rec{i:03d}"))
    return out


# -- on-disk corpus ------------------------------------------------------------

def write_recording(directory, rec: SyntheticRecording) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / f"{rec.name}.wav", rec.audio)
    with open(d / f"{rec.name}.labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start_s", "end_s", "activity"])
        for b in rec.bouts:
            w.writerow([repr(float(b.start_s)), repr(float(b.end_s)), b.label.label])
    with open(d / f"{rec.name}.events.jsonl", "w") as fh:
        for e in rec.events:
            fh.write(json.dumps({"start": e.start_s, "end": e.end_s, "class": e.jm_class.label}) + "\n")


def read_recording(directory, name: str, sample_rate_hz: int = 2000) -> SyntheticRecording:
    from .activity import read_bouts_csv

    d = Path(directory)
    audio = read_wav(d / f"{name}.wav", expected_rate=sample_rate_hz)
    bouts = read_bouts_csv(d / f"{name}.labels.csv")
    events = []
    ev_path = d / f"{name}.events.jsonl"
    if ev_path.exists():
        for line in ev_path.read_text().splitlines():
            if line.strip():
                o = json.loads(line)
                events.append(TruthEvent(o["start"], o["end"], JmClass.from_label(o["class"])))
    return SyntheticRecording(audio, bouts, events, name)


def list_recordings(directory) -> list[str]:
    return sorted(p.name[:-len(".labels.csv")] for p in Path(directory).glob("*.labels.csv"))


def missing_files(directory) -> list[str]:
    """Recordings in ``directory`` lacking their WAV or label file."""
    d = Path(directory)
    wavs = {p.stem for p in d.glob("*.wav")}
    labels = {p.name[:-len(".labels.csv")] for p in d.glob("*.labels.csv")}
    return sorted([f"{n}.labels.csv" for n in wavs - labels] + [f"{n}.wav" for n in labels - wavs])


def spec_to_dict(spec: SyntheticCorpusSpec) -> dict:
    return asdict(spec)


# -- environmental noise clips ----------------------------------------------------

NOISE_CLIP_KINDS = ("birds", "rain", "engine", "wind")


def _lowpass_noise(n: int, rng: np.random.Generator, cutoff_hz: float, fs: int) -> np.ndarray:
    from scipy.signal import butter, sosfilt

    sos = butter(2, cutoff_hz / (fs / 2), output="sos")
    return sosfilt(sos, rng.standard_normal(n))


def noise_clip(kind: str, duration_s: float, rng: np.random.Generator, fs: int = 2000) -> np.ndarray:
    """A stand-in for a field noise recording; unit RMS."""
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    if kind == "birds":
        x = 0.05 * rng.standard_normal(n)
        for onset in np.cumsum(rng.exponential(0.6, size=int(duration_s * 3) + 1)):
            i0 = int(onset * fs)
            if i0 >= n:
                break
            m = min(n - i0, int(rng.uniform(0.05, 0.25) * fs))
            tt = np.arange(m) / fs
            f0, f1 = rng.uniform(500, 950, 2)
            phase = 2 * np.pi * (f0 * tt + 0.5 * (f1 - f0) * tt ** 2 / max(tt[-1], 1e-9))
            x[i0:i0 + m] += np.sin(phase) * np.hanning(m)
    elif kind == "rain":
        x = _lowpass_noise(n, rng, 900.0, fs)
        drops = rng.random(n) < 40.0 / fs
        x += np.convolve(drops * rng.standard_normal(n) * 4.0, np.exp(-np.arange(20) / 3.0), mode="same")
    elif kind == "engine":
        f0 = rng.uniform(25, 45)
        wobble = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(0.1, 0.5) * t)
        x = sum(np.sin(2 * np.pi * h * f0 * wobble * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 16))
        x = x + 0.3 * _lowpass_noise(n, rng, 400.0, fs)
    elif kind == "wind":
        gust = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.05, 0.3) * t + rng.uniform(0, 2 * np.pi))
        x = _lowpass_noise(n, rng, 200.0, fs) * gust
    else:
        raise ConfigError(f"unknown noise clip kind {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt(np.mean(x * x))


def write_noise_clips(directory, seed: int = 0, per_kind: int = 2, duration_s: float = 60.0,
                      fs: int = 2000) -> list[Path]:
    """Write a small seeded library of environmental noise clips as WAV files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for kind in NOISE_CLIP_KINDS:
        for i in range(per_kind):
            x = noise_clip(kind, duration_s, rng, fs)
            p = d / f"{kind}_{i:02d}.wav"
            write_wav(p, AudioSignal(0.3 * x / np.max(np.abs(x)), fs))
            paths.append(p)
    return paths
