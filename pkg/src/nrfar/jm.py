"""Middle level: jaw-movement (JM) event detection, features and classification.

Candidates are found as envelope excursions above an adaptive threshold and
delimited on the energy stream with a second adaptive threshold. Both
thresholds are noise-floor estimates times a margin that grows as the
estimated SNR drops. Floors follow the inter-event levels and are refreshed
after every candidate, or after each idle block when nothing is detected.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dsp import AudioSignal, DspConfig, SignalProcessor
from .errors import ConfigError, DataError, FeatureError
from .neural import MlpModel


class JmClass(enum.IntEnum):
    RUMINATION_CHEW = 0
    GRAZING_CHEW = 1
    BITE = 2
    CHEW_BITE = 3

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_label(cls, label: str) -> "JmClass":
        try:
            return cls[label.strip().upper().replace("-", "_")]
        except KeyError:
            raise DataError(f"unknown JM class {label!r}") from None


JM_CLASS_ORDER = [c.label for c in JmClass]


@dataclass(frozen=True)
class JmFeatures:
    duration_s: float
    energy: float
    envelope_symmetry: float
    env_derivative_zero_crossings: int
    accumulated_abs_derivative: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.duration_s, self.energy, self.envelope_symmetry,
            float(self.env_derivative_zero_crossings), self.accumulated_abs_derivative,
        ])


@dataclass(frozen=True)
class JmEvent:
    timestamp_s: float
    jm_class: JmClass | None
    features: JmFeatures
    start_s: float
    end_s: float

    def to_json(self) -> str:
        return json.dumps({
            "t": self.timestamp_s,
            "class": None if self.jm_class is None else self.jm_class.label,
            "start": self.start_s,
            "end": self.end_s,
            "features": [float(v) for v in self.features.as_array()],
        })

    @classmethod
    def from_json(cls, line: str) -> "JmEvent":
        d = json.loads(line)
        f = d["features"]
        feats = JmFeatures(f[0], f[1], f[2], int(f[3]), f[4])
        klass = None if d["class"] is None else JmClass.from_label(d["class"])
        return cls(d["t"], klass, feats, d["start"], d["end"])


@dataclass(frozen=True)
class AdaptiveThresholds:
    envelope_threshold: float
    energy_threshold: float
    envelope_floor: float
    energy_floor: float
    snr_estimate_db: float


@dataclass(frozen=True)
class DetectorConfig:
    multiplier_min: float = 2.0
    multiplier_max: float = 6.0
    snr_low_db: float = 0.0  # at or below: multiplier_max
    snr_high_db: float = 20.0  # at or above: multiplier_min
    initial_snr_db: float = 10.0
    energy_threshold_ratio: float = 1.0
    floor_smoothing: float = 0.1
    snr_smoothing: float = 0.1
    init_s: float = 1.0
    idle_update_s: float = 1.0
    min_gap_ticks: int = 5
    valley_ratio: float = 0.25
    max_excursion_s: float = 4.0
    min_floor: float = 1e-20
    gate_min_duration_s: float = 0.05
    gate_max_duration_s: float = 2.0
    gate_energy_ratio: float = 3.0
    symmetry: str = "mass"  # or "time"

    def validate(self) -> None:
        if not 0 < self.multiplier_min <= self.multiplier_max:
            raise ConfigError("threshold multipliers must satisfy 0 < min <= max")
        if not self.snr_low_db < self.snr_high_db:
            raise ConfigError("snr_low_db must be below snr_high_db")
        for name in ("floor_smoothing", "snr_smoothing"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in (0, 1]")
        if self.init_s <= 0 or self.idle_update_s <= 0 or self.max_excursion_s <= 0:
            raise ConfigError("detector time spans must be positive")
        if not 0 < self.gate_min_duration_s < self.gate_max_duration_s:
            raise ConfigError("invalid discard-gate duration range")
        if self.symmetry not in ("mass", "time"):
            raise ConfigError(f"unknown symmetry mode {self.symmetry!r}")
        if self.min_floor <= 0:
            raise ConfigError("min_floor must be positive")


def threshold_multiplier(snr_db: float, cfg: DetectorConfig) -> float:
    """Piecewise-linear margin over the noise floor, nonincreasing in SNR."""
    frac = (snr_db - cfg.snr_low_db) / (cfg.snr_high_db - cfg.snr_low_db)
    frac = min(1.0, max(0.0, frac))
    return cfg.multiplier_max - frac * (cfg.multiplier_max - cfg.multiplier_min)


class ThresholdTracker:
    """Noise floors and SNR estimate behind the two adaptive thresholds."""

    def __init__(self, cfg: DetectorConfig | None = None):
        self.cfg = cfg or DetectorConfig()
        self.envelope_floor = self.cfg.min_floor
        self.energy_floor = self.cfg.min_floor
        self.snr_db = self.cfg.initial_snr_db
        self.initialized = False
        self.updates = 0

    def initialize(self, envelope, energy) -> None:
        self.envelope_floor = max(float(np.median(envelope)), self.cfg.min_floor)
        self.energy_floor = max(float(np.median(energy)), self.cfg.min_floor)
        self.initialized = True

    def update(self, gap_envelope=None, gap_energy=None, event_mean_energy: float | None = None) -> AdaptiveThresholds:
        """Refresh floors from an inter-event stretch and the SNR from an event's energy."""
        beta = self.cfg.floor_smoothing
        if gap_envelope is not None and len(gap_envelope) >= self.cfg.min_gap_ticks:
            level_env = float(np.median(gap_envelope))
            level_en = float(np.median(gap_energy))
            self.envelope_floor = max((1 - beta) * self.envelope_floor + beta * level_env, self.cfg.min_floor)
            self.energy_floor = max((1 - beta) * self.energy_floor + beta * level_en, self.cfg.min_floor)
        if event_mean_energy is not None and event_mean_energy > 0:
            snr = 10.0 * math.log10(event_mean_energy / self.energy_floor)
            g = self.cfg.snr_smoothing
            self.snr_db = (1 - g) * self.snr_db + g * snr
        self.updates += 1
        return self.thresholds

    @property
    def multiplier(self) -> float:
        return threshold_multiplier(self.snr_db, self.cfg)

    @property
    def thresholds(self) -> AdaptiveThresholds:
        m = self.multiplier
        return AdaptiveThresholds(
            envelope_threshold=m * self.envelope_floor,
            energy_threshold=self.cfg.energy_threshold_ratio * m * self.energy_floor,
            envelope_floor=self.envelope_floor,
            energy_floor=self.energy_floor,
            snr_estimate_db=self.snr_db,
        )


def extract_features(envelope_segment, energy_segment, f_s: float, symmetry: str = "mass") -> JmFeatures:
    env = np.asarray(envelope_segment, dtype=np.float64)
    en = np.asarray(energy_segment, dtype=np.float64)
    n = len(env)
    if n < 2:
        raise FeatureError(f"segment of {n} samples is too short for feature extraction")
    if len(en) != n:
        raise FeatureError("envelope and energy segments must have the same length")
    peak = int(np.argmax(env))
    total = float(env.sum())
    if symmetry == "mass":
        sym = float(env[:peak].sum()) / total if total > 0 else 0.5
    elif symmetry == "time":
        sym = peak / (n - 1)
    else:
        raise ConfigError(f"unknown symmetry mode {symmetry!r}")
    d = np.diff(env)
    signs = np.sign(d)
    signs = signs[signs != 0]
    crossings = int(np.count_nonzero(signs[1:] != signs[:-1]))
    return JmFeatures(
        duration_s=n / f_s,
        energy=float(en.sum()),
        envelope_symmetry=min(1.0, max(0.0, sym)),
        env_derivative_zero_crossings=crossings,
        accumulated_abs_derivative=float(np.abs(d).sum()),
    )


@dataclass(frozen=True)
class Candidate:
    """A delimited envelope peak, before the classify-or-discard decision."""

    peak: int  # tick index of the envelope maximum inside the bounds
    start: int  # first tick (inclusive)
    end: int  # last tick (exclusive)
    features: JmFeatures
    thresholds: AdaptiveThresholds  # in force when the candidate was detected
    accepted: bool  # passed the discard gate


def passes_gate(features: JmFeatures, energy_floor: float, f_s: float, cfg: DetectorConfig) -> bool:
    """Discard gate: plausible JM duration and mean frame energy well above the floor."""
    if not cfg.gate_min_duration_s <= features.duration_s <= cfg.gate_max_duration_s:
        return False
    mean_energy = features.energy / (features.duration_s * f_s)
    return mean_energy >= cfg.gate_energy_ratio * energy_floor


class JmDetector:
    """Streaming candidate detector over aligned envelope/energy ticks.

    Decisions only depend on tick positions, never on how the streams were
    chunked, so chunked and one-shot feeding give the same candidates.
    """

    def __init__(self, cfg: DetectorConfig | None = None, f_s: int = 150):
        self.cfg = cfg or DetectorConfig()
        self.cfg.validate()
        self.f_s = f_s
        self.tracker = ThresholdTracker(self.cfg)
        self._env = np.zeros(0)
        self._en = np.zeros(0)
        self._offset = 0  # global tick index of _env[0]
        self._cursor = 0  # next tick to scan
        self._gap_start = 0  # start of the current inter-event stretch
        self._last_end = 0  # end of the previous accepted/discarded candidate
        self._init_ticks = max(2, int(round(self.cfg.init_s * f_s)))
        self._idle_ticks = max(2, int(round(self.cfg.idle_update_s * f_s)))
        self._max_back = int(math.ceil(self.cfg.gate_max_duration_s * f_s))
        self._max_excursion = max(2, int(round(self.cfg.max_excursion_s * f_s)))

    @property
    def thresholds(self) -> AdaptiveThresholds:
        return self.tracker.thresholds

    def feed(self, envelope, energy, final: bool = False) -> list[Candidate]:
        envelope = np.asarray(envelope, dtype=np.float64)
        energy = np.asarray(energy, dtype=np.float64)
        if envelope.shape != energy.shape:
            raise ConfigError("envelope and energy streams must be aligned")
        self._env = np.concatenate([self._env, envelope])
        self._en = np.concatenate([self._en, energy])
        out: list[Candidate] = []
        end = self._offset + len(self._env)
        if not self.tracker.initialized:
            if end - self._offset < self._init_ticks and not final:
                return out
            n = min(self._init_ticks, end - self._offset)
            if n == 0:
                return out
            self.tracker.initialize(self._env[:n], self._en[:n])
        while True:
            step = self._step(end, final)
            if step is None:
                break
            if isinstance(step, Candidate):
                out.append(step)
        self._trim()
        return out

    def flush(self) -> list[Candidate]:
        return self.feed(np.zeros(0), np.zeros(0), final=True)

    # -- internals -----------------------------------------------------------

    def _e(self, a: int, b: int) -> np.ndarray:
        return self._env[a - self._offset:b - self._offset]

    def _g(self, a: int, b: int) -> np.ndarray:
        return self._en[a - self._offset:b - self._offset]

    def _trim(self) -> None:
        keep = min(self._gap_start, max(self._last_end, self._cursor - self._max_back))
        drop = keep - self._offset
        if drop > 0:
            self._env = self._env[drop:]
            self._en = self._en[drop:]
            self._offset = keep

    def _idle_update(self, upto: int) -> None:
        self.tracker.update(self._e(self._gap_start, upto), self._g(self._gap_start, upto))
        self._gap_start = upto
        self._cursor = max(self._cursor, upto)

    def _step(self, end: int, final: bool):
        """Advance the scan by one decision. Returns None when more data is needed."""
        thr = self.tracker.thresholds
        window_end = self._gap_start + self._idle_ticks
        scan_to = min(end, window_end)
        if self._cursor >= end:
            return None
        seg = self._e(self._cursor, scan_to)
        hits = np.flatnonzero(seg > thr.envelope_threshold)
        if hits.size == 0:
            if scan_to == window_end:
                self._idle_update(window_end)
                return True
            return None  # wait for the rest of the idle block
        k0 = self._cursor + int(hits[0])

        # excursion end: envelope back under threshold, or a valley followed by a new rise
        limit = min(end, k0 + self._max_excursion)
        ex = self._e(k0, limit)
        runmax = np.maximum.accumulate(ex)
        stop = ex <= thr.envelope_threshold
        stop[1:] |= (ex[1:] > ex[:-1]) & (ex[:-1] < self.cfg.valley_ratio * runmax[:-1])
        stop[0] = False
        idx = np.flatnonzero(stop)
        if idx.size:
            k1 = k0 + int(idx[0])
        elif limit == k0 + self._max_excursion or final:
            k1 = limit
        else:
            return None
        peak = k0 + int(np.argmax(self._e(k0, k1)))

        # energy support: last active energy tick at or before the peak
        lower = max(self._last_end, k0 - self._max_back, self._offset)
        back = self._g(lower, peak + 1)
        active = np.flatnonzero(back >= thr.energy_threshold)
        if active.size == 0:
            self._cursor = k1
            return True
        a = lower + int(active[-1])
        quiet_before = np.flatnonzero(self._g(lower, a) < thr.energy_threshold)
        start = lower + int(quiet_before[-1]) + 1 if quiet_before.size else lower
        fwd_limit = min(end, a + 1 + 2 * self._max_back)
        quiet_after = np.flatnonzero(self._g(a + 1, fwd_limit) < thr.energy_threshold)
        if quiet_after.size:
            stop_e = a + 1 + int(quiet_after[0])
        elif fwd_limit == a + 1 + 2 * self._max_back or final:
            stop_e = fwd_limit
        else:
            return None
        stop_tick = max(stop_e, peak + 1)

        env_seg = self._e(start, stop_tick)
        en_seg = self._g(start, stop_tick)
        new_cursor = max(stop_tick, k1)
        try:
            feats = extract_features(env_seg, en_seg, self.f_s, self.cfg.symmetry)
        except FeatureError:
            feats = None
        accepted = feats is not None and passes_gate(feats, thr.energy_floor, self.f_s, self.cfg)
        if accepted:
            self.tracker.update(self._e(self._gap_start, start), self._g(self._gap_start, start),
                                event_mean_energy=float(en_seg.mean()))
        else:
            # a discarded candidate is background: it feeds the floor estimate
            self.tracker.update(self._e(self._gap_start, new_cursor), self._g(self._gap_start, new_cursor))
        self._last_end = stop_tick
        self._cursor = new_cursor
        self._gap_start = new_cursor
        if feats is None:
            return True
        peak_tick = start + int(np.argmax(env_seg))
        return Candidate(peak_tick, start, stop_tick, feats, thr, accepted)


def classify_jm(features: JmFeatures, model: MlpModel) -> JmClass:
    """Class of an accepted candidate by the 5-6-4 MLP (ties: fixed class order)."""
    model.require_shape(5, 4, hidden=6)
    return JmClass(int(model.predict(features.as_array())))


def candidate_to_event(c: Candidate, f_s: float, jm_class: JmClass | None) -> JmEvent:
    return JmEvent(c.peak / f_s, jm_class, c.features, c.start / f_s, c.end / f_s)


class JmRecognizer:
    """Audio chunks in, classified JM events out (bottom + middle levels)."""

    def __init__(self, model: MlpModel | None, dsp_cfg: DspConfig | None = None,
                 det_cfg: DetectorConfig | None = None):
        self.dsp_cfg = dsp_cfg or DspConfig()
        self.processor = SignalProcessor(self.dsp_cfg)
        self.detector = JmDetector(det_cfg, self.dsp_cfg.sub_rate_hz)
        self.model = model
        if model is not None:
            model.require_shape(5, 4, hidden=6)
        self.candidates: list[Candidate] = []
        self.keep_candidates = False

    def _events(self, cands: list[Candidate]) -> list[JmEvent]:
        f_s = self.dsp_cfg.sub_rate_hz
        if self.keep_candidates:
            self.candidates.extend(cands)
        out = []
        for c in cands:
            if not c.accepted:
                continue
            klass = None if self.model is None else classify_jm(c.features, self.model)
            out.append(candidate_to_event(c, f_s, klass))
        return out

    def process(self, chunk) -> list[JmEvent]:
        derived = self.processor.process(chunk)
        return self._events(self.detector.feed(derived.envelope, derived.energy))

    def finish(self) -> list[JmEvent]:
        return self._events(self.detector.flush())


def detect_candidates(envelope, energy, cfg: DetectorConfig | None = None, f_s: int = 150) -> list[Candidate]:
    det = JmDetector(cfg, f_s)
    cands = det.feed(envelope, energy)
    return cands + det.flush()


def recognize_events(signal: AudioSignal, model: MlpModel | None, dsp_cfg: DspConfig | None = None,
                     det_cfg: DetectorConfig | None = None) -> list[JmEvent]:
    rec = JmRecognizer(model, dsp_cfg or DspConfig(sample_rate_hz=signal.sample_rate_hz), det_cfg)
    return rec.process(signal) + rec.finish()


def write_events_jsonl(path, events: list[JmEvent]) -> None:
    with open(path, "w") as fh:
        for e in events:
            fh.write(e.to_json() + "\n")


def read_events_jsonl(path) -> list[JmEvent]:
    with open(path) as fh:
        return [JmEvent.from_json(line) for line in fh if line.strip()]
