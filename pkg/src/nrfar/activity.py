"""Top level: 5-min segment features, activity classification, smoothing and bouts."""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, OrderingError
from .jm import JmClass, JmEvent
from .neural import MlpModel

SEGMENT_S = 300.0


class ActivityLabel(enum.IntEnum):
    GRAZING = 0
    RUMINATION = 1
    OTHER = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ActivityLabel":
        key = label.strip().upper()
        for member in cls:
            if member.name == key or member.name[0] == key:
                return member
        raise DataError(f"unknown activity label {label!r}")


ACTIVITY_CLASS_ORDER = [a.label for a in ActivityLabel]


@dataclass(frozen=True)
class ActivityFeatures:
    jm_rate_per_s: float
    prop_rumination_chew: float
    prop_grazing_chew: float
    prop_bite: float
    prop_chew_bite: float

    def as_array(self) -> np.ndarray:
        return np.array([self.jm_rate_per_s, self.prop_rumination_chew, self.prop_grazing_chew,
                         self.prop_bite, self.prop_chew_bite])


@dataclass
class SegmentEvents:
    index: int
    start_s: float
    end_s: float
    events: list[JmEvent] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return self.end_s - self.start_s < SEGMENT_S - 1e-9

    @property
    def elapsed_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class ActivitySegment:
    index: int
    start_s: float
    end_s: float
    features: ActivityFeatures
    raw_label: ActivityLabel
    smoothed_label: ActivityLabel
    partial: bool = False


@dataclass(frozen=True)
class Bout:
    start_s: float
    end_s: float
    label: ActivityLabel


def _check_order(events) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.timestamp_s < prev.timestamp_s:
            raise OrderingError(f"event at {cur.timestamp_s} s follows one at {prev.timestamp_s} s")


def segment_events(events: list[JmEvent], duration_s: float | None = None,
                   segment_s: float = SEGMENT_S) -> list[SegmentEvents]:
    """Split a time-ordered event stream into half-open windows [k*T, (k+1)*T).

    The last window is cut at ``duration_s`` when the recording ends mid-segment.
    """
    _check_order(events)
    if duration_s is None:
        duration_s = events[-1].timestamp_s if events else 0.0
    if events:
        duration_s = max(duration_s, events[-1].timestamp_s)
    n = int(math.ceil(duration_s / segment_s - 1e-12)) if duration_s > 0 else 0
    if events and int(events[-1].timestamp_s // segment_s) >= n:
        n = int(events[-1].timestamp_s // segment_s) + 1
    segs = [SegmentEvents(k, k * segment_s, min((k + 1) * segment_s, max(duration_s, k * segment_s)))
            for k in range(n)]
    for e in events:
        segs[int(e.timestamp_s // segment_s)].events.append(e)
    return segs


def activity_features(events: list[JmEvent], elapsed_s: float = SEGMENT_S) -> ActivityFeatures:
    n = len(events)
    if n == 0:
        return ActivityFeatures(0.0, 0.0, 0.0, 0.0, 0.0)
    if elapsed_s <= 0:
        raise ConfigError("segment duration must be positive")
    counts = Counter(e.jm_class for e in events)
    return ActivityFeatures(
        n / elapsed_s,
        counts[JmClass.RUMINATION_CHEW] / n,
        counts[JmClass.GRAZING_CHEW] / n,
        counts[JmClass.BITE] / n,
        counts[JmClass.CHEW_BITE] / n,
    )


def classify_activity(features: ActivityFeatures, model: MlpModel) -> ActivityLabel:
    model.require_shape(5, 3, hidden=(4, 10))
    return ActivityLabel(int(model.predict(features.as_array())))


def _smooth_window(window: list[int], center: int, mode: str) -> int:
    if mode == "majority":
        label, count = Counter(window).most_common(1)[0]
        return label if count > len(window) // 2 else center
    if mode == "ordinal":
        return int(np.median(window))
    raise ConfigError(f"unknown smoothing mode {mode!r}")


def smooth_labels(labels, order: int = 3, mode: str = "majority") -> list[ActivityLabel]:
    """Odd-order categorical median filter with edge replication.

    ``majority`` keeps the centre label when no label fills more than half of
    the window; ``ordinal`` takes the numeric median of the label codes.
    """
    if order < 1 or order % 2 == 0:
        raise ConfigError("median filter order must be a positive odd number")
    raw = [int(x) for x in labels]
    if not raw:
        return []
    half = order // 2
    padded = [raw[0]] * half + raw + [raw[-1]] * half
    return [ActivityLabel(_smooth_window(padded[i:i + order], raw[i], mode)) for i in range(len(raw))]


def labels_to_bouts(labels, segment_s: float = SEGMENT_S, total_s: float | None = None) -> list[Bout]:
    """Merge runs of identical segment labels into bouts on the segment grid."""
    bouts: list[Bout] = []
    for i, lab in enumerate(labels):
        lab = ActivityLabel(int(lab))
        start, end = i * segment_s, (i + 1) * segment_s
        if bouts and bouts[-1].label == lab:
            bouts[-1] = Bout(bouts[-1].start_s, end, lab)
        else:
            bouts.append(Bout(start, end, lab))
    if bouts and total_s is not None and total_s < bouts[-1].end_s:
        last = bouts[-1]
        bouts[-1] = Bout(last.start_s, max(total_s, last.start_s), last.label)
    return bouts


def bouts_to_labels(bouts: list[Bout], segment_s: float = SEGMENT_S) -> list[ActivityLabel]:
    out = []
    for b in bouts:
        n = int(math.ceil((b.end_s - b.start_s) / segment_s - 1e-9))
        out.extend([b.label] * n)
    return out


@dataclass(frozen=True)
class ActivityConfig:
    segment_s: float = SEGMENT_S
    median_order: int = 3
    median_mode: str = "majority"

    def validate(self) -> None:
        if self.segment_s <= 0:
            raise ConfigError("segment length must be positive")
        if self.median_order < 1 or self.median_order % 2 == 0:
            raise ConfigError("median filter order must be a positive odd number")
        if self.median_mode not in ("majority", "ordinal"):
            raise ConfigError(f"unknown smoothing mode {self.median_mode!r}")


class ActivityRecognizer:
    """Streaming top level: classified JM events in, smoothed segments out.

    A segment's smoothed label is final once the raw label of the segment
    ``order // 2`` places later is known, so output trails input by that many
    segments until :meth:`finish`.
    """

    def __init__(self, model: MlpModel, cfg: ActivityConfig | None = None, smooth: bool = True):
        self.cfg = cfg or ActivityConfig()
        self.cfg.validate()
        model.require_shape(5, 3, hidden=(4, 10))
        self.model = model
        self.smooth = smooth
        self._current: list[JmEvent] = []
        self._index = 0
        self._last_t = -math.inf
        self._closed: list[tuple[SegmentEvents, ActivityFeatures, ActivityLabel]] = []
        self._emitted = 0

    def _close(self, end_s: float) -> None:
        seg = SegmentEvents(self._index, self._index * self.cfg.segment_s, end_s, self._current)
        feats = activity_features(seg.events, seg.elapsed_s)
        self._closed.append((seg, feats, classify_activity(feats, self.model)))
        self._current = []
        self._index += 1

    def _ready(self, final: bool) -> list[ActivitySegment]:
        half = self.cfg.median_order // 2 if self.smooth else 0
        raw = [c[2] for c in self._closed]
        n_final = len(raw) if final else max(0, len(raw) - half)
        if n_final <= self._emitted:
            return []
        smoothed = smooth_labels(raw, self.cfg.median_order, self.cfg.median_mode) if self.smooth else raw
        if not final:
            # right-edge replication is provisional until the following segments arrive
            smoothed = smoothed[:n_final]
        out = []
        for i in range(self._emitted, n_final):
            seg, feats, lab = self._closed[i]
            out.append(ActivitySegment(seg.index, seg.start_s, seg.end_s, feats, lab,
                                       ActivityLabel(smoothed[i]), seg.partial))
        self._emitted = n_final
        return out

    def push(self, event: JmEvent) -> list[ActivitySegment]:
        if event.timestamp_s < self._last_t:
            raise OrderingError(f"event at {event.timestamp_s} s follows one at {self._last_t} s")
        self._last_t = event.timestamp_s
        T = self.cfg.segment_s
        while event.timestamp_s >= (self._index + 1) * T:
            self._close((self._index + 1) * T)
        self._current.append(event)
        return self._ready(final=False)

    def finish(self, duration_s: float) -> list[ActivitySegment]:
        T = self.cfg.segment_s
        duration_s = max(duration_s, self._last_t if self._last_t > -math.inf else 0.0)
        while self._index * T < duration_s - 1e-9:
            self._close(min((self._index + 1) * T, duration_s))
        return self._ready(final=True)


def recognize_activity(events: list[JmEvent], duration_s: float, model: MlpModel,
                       cfg: ActivityConfig | None = None, smooth: bool = True) -> list[ActivitySegment]:
    rec = ActivityRecognizer(model, cfg, smooth)
    out = []
    for e in events:
        out.extend(rec.push(e))
    out.extend(rec.finish(duration_s))
    return out


def segments_to_bouts(segments: list[ActivitySegment], duration_s: float | None = None,
                      segment_s: float = SEGMENT_S) -> list[Bout]:
    return labels_to_bouts([s.smoothed_label for s in segments], segment_s, duration_s)


SEGMENT_COLUMNS = ["index", "start_s", "jm_rate_per_s", "prop_rumination_chew", "prop_grazing_chew",
                   "prop_bite", "prop_chew_bite", "raw_label", "smoothed_label"]


def write_segments_csv(path, segments: list[ActivitySegment], header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(SEGMENT_COLUMNS)
        for s in segments:
            w.writerow([s.index, repr(s.start_s), *[repr(float(v)) for v in s.features.as_array()],
                        s.raw_label.label, s.smoothed_label.label])


def write_bouts_csv(path, bouts: list[Bout], header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["start_s", "end_s", "label"])
        for b in bouts:
            w.writerow([repr(float(b.start_s)), repr(float(b.end_s)), b.label.label])


def read_bouts_csv(path) -> list[Bout]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    i_s, i_e = header.index("start_s"), header.index("end_s")
    i_l = header.index("label") if "label" in header else header.index("activity")
    return [Bout(float(r[i_s]), float(r[i_e]), ActivityLabel.from_label(r[i_l])) for r in body if r]
