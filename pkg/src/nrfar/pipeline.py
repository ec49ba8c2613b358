"""End-to-end NRFAR: training both MLPs from labeled recordings, and recognition."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .activity import (ACTIVITY_CLASS_ORDER, ActivityConfig, ActivityLabel, ActivitySegment, Bout, SegmentEvents,
                       activity_features, recognize_activity, segment_events, segments_to_bouts)
from .dsp import AudioSignal, DspConfig, derive
from .errors import TrainingError
from .evaluation import BalancePlan, expand_frames, rebalance
from .jm import (Candidate, DetectorConfig, JmClass, JmEvent, JM_CLASS_ORDER, candidate_to_event,
                 detect_candidates)
from .neural import GridResult, MlpModel, TrainConfig, grid_search
from .synth import TruthEvent

JM_HIDDEN = 6


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    balance: BalancePlan = field(default_factory=BalancePlan)
    match_tolerance_s: float = 0.10
    validation_share: float = 0.25  # of training samples, held out for the grid search

    def validate(self) -> None:
        self.dsp.validate()
        self.detector.validate()
        self.activity.validate()
        self.train.validate()


def detect(audio: AudioSignal, cfg: PipelineConfig | None = None) -> list[Candidate]:
    """Bottom level plus event detection; the result does not depend on any model."""
    cfg = cfg or PipelineConfig()
    d = derive(audio, cfg.dsp)
    return detect_candidates(d.envelope, d.energy, cfg.detector, cfg.dsp.sub_rate_hz)


def classify_candidates(cands: list[Candidate], model: MlpModel, f_s: int) -> list[JmEvent]:
    acc = [c for c in cands if c.accepted]
    if not acc:
        return []
    model.require_shape(5, 4, hidden=JM_HIDDEN)
    labels = model.predict(np.array([c.features.as_array() for c in acc]))
    return [candidate_to_event(c, f_s, JmClass(int(k))) for c, k in zip(acc, np.atleast_1d(labels))]


def match_candidates(cands: list[Candidate], truth: list[TruthEvent], f_s: int,
                     tol_s: float = 0.10) -> np.ndarray:
    """Ground-truth class per accepted candidate, -1 when unmatched.

    A candidate matches a truth event whose [start - tol, end + tol] span holds
    its peak time; each truth event is used at most once, earliest first.
    """
    truth = sorted(truth, key=lambda e: e.start_s)
    starts = [e.start_s - tol_s for e in truth]
    used = np.zeros(len(truth), dtype=bool)
    out = np.full(len(cands), -1, dtype=np.int64)
    for i, c in enumerate(cands):
        if not c.accepted:
            continue
        t = c.peak / f_s
        j = bisect.bisect_right(starts, t) - 1
        while j >= 0 and truth[j].end_s + tol_s >= t - 3.0:
            if not used[j] and truth[j].end_s + tol_s >= t:
                used[j] = True
                out[i] = int(truth[j].jm_class)
                break
            j -= 1
    return out


def segment_truth(bouts: list[Bout], duration_s: float, segment_s: float) -> np.ndarray:
    """Majority 1-s frame label per segment (ties go to the lower class code)."""
    frames = expand_frames(bouts, duration_s).labels
    per = int(round(segment_s))
    n_seg = int(math.ceil(len(frames) / per)) if len(frames) else 0
    out = np.empty(n_seg, dtype=np.int64)
    for k in range(n_seg):
        counts = np.bincount(frames[k * per:(k + 1) * per], minlength=len(ActivityLabel))
        out[k] = int(np.argmax(counts))
    return out


def segment_dataset(events: list[JmEvent], bouts: list[Bout], duration_s: float,
                    segment_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Activity features and truth labels for the full segments of one recording."""
    segs: list[SegmentEvents] = segment_events(events, duration_s, segment_s)
    labels = segment_truth(bouts, duration_s, segment_s)
    n = min(len(segs), len(labels))
    keep = [k for k in range(n) if not segs[k].partial]
    if not keep:
        return np.zeros((0, 5)), np.zeros(0, dtype=np.int64)
    x = np.array([activity_features(segs[k].events, segs[k].elapsed_s).as_array() for k in keep])
    return x, labels[keep]


@dataclass
class LabeledRecording:
    """Detection output cached with the annotations needed for training and scoring."""

    name: str
    duration_s: float
    candidates: list[Candidate]
    bouts: list[Bout]
    truth_events: list[TruthEvent] = field(default_factory=list)


@dataclass
class NrfarModels:
    jm: MlpModel
    activity: MlpModel
    jm_search: GridResult | None = None
    activity_search: GridResult | None = None


def stratified_split(y, share: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded per-class split into (train, validation) indices; classes with one sample stay in train."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    tr, va = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(share * len(idx))) if len(idx) > 1 else 0
        n_val = min(len(idx) - 1, max(1, n_val)) if len(idx) > 1 else 0
        va.extend(idx[:n_val])
        tr.extend(idx[n_val:])
    return np.sort(np.array(tr, dtype=np.int64)), np.sort(np.array(va, dtype=np.int64))


def jm_dataset(recs: list[LabeledRecording], cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Features of accepted candidates matched to an annotated JM, with its class."""
    xs, ys = [], []
    for r in recs:
        y = match_candidates(r.candidates, r.truth_events, cfg.dsp.sub_rate_hz, cfg.match_tolerance_s)
        for c, k in zip(r.candidates, y):
            if k >= 0:
                xs.append(c.features.as_array())
                ys.append(k)
    if not xs:
        raise TrainingError("no detected JM event matches the annotations")
    return np.array(xs), np.array(ys, dtype=np.int64)


def train_jm_model(recs: list[LabeledRecording], cfg: PipelineConfig | None = None) -> GridResult:
    """5-6-4 JM classifier; the learning rate is chosen on a held-out share of the events."""
    cfg = cfg or PipelineConfig()
    x, y = jm_dataset(recs, cfg)
    tr, va = stratified_split(y, cfg.validation_share, cfg.train.seed)
    tcfg = TrainConfig(cfg.train.learning_rates, (JM_HIDDEN,), cfg.train.max_iter, cfg.train.tol,
                       cfg.train.patience, cfg.train.sigma, cfg.train.seed)
    return grid_search(x[tr], y[tr], x[va], y[va], JM_CLASS_ORDER, tcfg)


def activity_dataset(recs: list[LabeledRecording], jm_model: MlpModel,
                     cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [np.zeros((0, 5))], [np.zeros(0, dtype=np.int64)]
    for r in recs:
        events = classify_candidates(r.candidates, jm_model, cfg.dsp.sub_rate_hz)
        x, y = segment_dataset(events, r.bouts, r.duration_s, cfg.activity.segment_s)
        xs.append(x)
        ys.append(y)
    return np.vstack(xs), np.concatenate(ys)


def train_activity_model(recs: list[LabeledRecording], jm_model: MlpModel,
                         cfg: PipelineConfig | None = None) -> GridResult:
    """5-H-3 activity classifier on segment features of recognized JM events.

    Segments are split into a training and a validation share; only the
    training share is rebalanced, the validation share keeps its class mix.
    """
    cfg = cfg or PipelineConfig()
    x, y = activity_dataset(recs, jm_model, cfg)
    if len(y) == 0:
        raise TrainingError("no complete segment in the training recordings")
    tr, va = stratified_split(y, cfg.validation_share, cfg.train.seed + 1)
    xtr, ytr = x[tr], y[tr]
    if len(np.unique(ytr)) > 1:
        xtr, ytr = rebalance(xtr, ytr, cfg.balance)
    return grid_search(xtr, ytr, x[va], y[va], ACTIVITY_CLASS_ORDER, cfg.train)


def train_nrfar(recs: list[LabeledRecording], cfg: PipelineConfig | None = None) -> NrfarModels:
    cfg = cfg or PipelineConfig()
    cfg.validate()
    jm = train_jm_model(recs, cfg)
    act = train_activity_model(recs, jm.model, cfg)
    return NrfarModels(jm.model, act.model, jm, act)


@dataclass
class Recognition:
    events: list[JmEvent]
    segments: list[ActivitySegment]
    bouts: list[Bout]


def recognize_candidates(cands: list[Candidate], duration_s: float, models: NrfarModels,
                         cfg: PipelineConfig | None = None, smooth: bool = True) -> Recognition:
    cfg = cfg or PipelineConfig()
    events = classify_candidates(cands, models.jm, cfg.dsp.sub_rate_hz)
    segs = recognize_activity(events, duration_s, models.activity, cfg.activity, smooth)
    return Recognition(events, segs, segments_to_bouts(segs, duration_s, cfg.activity.segment_s))


def recognize(audio: AudioSignal, models: NrfarModels, cfg: PipelineConfig | None = None) -> Recognition:
    """Audio in, JM events + activity segments + bouts out."""
    cfg = cfg or PipelineConfig()
    return recognize_candidates(detect(audio, cfg), audio.duration_s, models, cfg)


def predicted_frames(rec: Recognition, duration_s: float) -> np.ndarray:
    return expand_frames(rec.bouts, duration_s, source="prediction").labels
