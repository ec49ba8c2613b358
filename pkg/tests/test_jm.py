import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrfar.dsp import AudioSignal, DspConfig, SignalProcessor, derive
from nrfar.errors import ConfigError, DataError, FeatureError
from nrfar.jm import (JM_CLASS_ORDER, DetectorConfig, JmClass, JmDetector, JmEvent, JmFeatures, JmRecognizer,
                      ThresholdTracker, classify_jm, detect_candidates, extract_features, passes_gate,
                      read_events_jsonl, recognize_events, threshold_multiplier, write_events_jsonl)
from nrfar.neural import zero_model

FS = 2000
F_S = 150


def _detect(x):
    d = derive(AudioSignal(x, FS))
    return detect_candidates(d.envelope, d.energy)


def test_class_order_and_labels():
    assert JM_CLASS_ORDER == ["rumination-chew", "grazing-chew", "bite", "chew-bite"]
    assert JmClass.from_label("chew-bite") is JmClass.CHEW_BITE
    with pytest.raises(DataError):
        JmClass.from_label("sneeze")


def test_features_hand_example():
    f = extract_features([0, 1, 2, 1, 0], [0, 1, 2, 1, 0], F_S)
    assert f.duration_s == pytest.approx(5 / 150)
    assert f.envelope_symmetry == pytest.approx(0.25)
    assert f.env_derivative_zero_crossings == 1
    assert f.accumulated_abs_derivative == pytest.approx(4.0)
    assert f.energy == pytest.approx(4.0)


def test_monotone_ramp_has_no_derivative_sign_change():
    f = extract_features(np.arange(20.0), np.ones(20), F_S)
    assert f.env_derivative_zero_crossings == 0


def test_symmetric_flat_shoulders_approach_half():
    syms = []
    for n in (5, 50, 500):
        env = np.concatenate([np.ones(n), [2.0], np.ones(n)])
        syms.append(extract_features(env, env, F_S).envelope_symmetry)
    assert abs(syms[-1] - 0.5) < abs(syms[0] - 0.5)
    assert syms[-1] == pytest.approx(0.5, abs=1e-3)


def test_time_symmetry_mode():
    f = extract_features([0, 1, 2, 1, 0], [0, 1, 2, 1, 0], F_S, symmetry="time")
    assert 0 <= f.envelope_symmetry <= 1
    with pytest.raises(ConfigError):
        extract_features([0, 1], [0, 1], F_S, symmetry="other")


def test_degenerate_segment_rejected():
    with pytest.raises(FeatureError):
        extract_features([1.0], [1.0], F_S)


@given(st.lists(st.floats(0, 1e3), min_size=2, max_size=300))
def test_feature_invariants(env):
    f = extract_features(env, env, F_S)
    assert f.duration_s > 0 and f.energy >= 0
    assert 0 <= f.envelope_symmetry <= 1
    assert f.env_derivative_zero_crossings >= 0 and f.accumulated_abs_derivative >= 0


def test_multiplier_shape():
    cfg = DetectorConfig()
    assert threshold_multiplier(-50, cfg) == cfg.multiplier_max
    assert threshold_multiplier(90, cfg) == cfg.multiplier_min
    grid = [threshold_multiplier(s, cfg) for s in np.linspace(-20, 40, 61)]
    assert all(a >= b for a, b in zip(grid, grid[1:]))


def test_tracker_converges_to_stationary_floor():
    tr = ThresholdTracker()
    tr.initialize(np.full(150, 5.0), np.full(150, 50.0))
    for _ in range(100):
        tr.update(np.full(150, 2.0), np.full(150, 20.0))
    m = tr.multiplier
    assert tr.thresholds.envelope_threshold == pytest.approx(m * 2.0, rel=0.01)
    assert tr.thresholds.energy_threshold == pytest.approx(m * 20.0, rel=0.01)


def test_tracker_follows_doubling_floor():
    tr = ThresholdTracker()
    tr.initialize(np.full(150, 1.0), np.full(150, 1.0))
    for _ in range(100):
        tr.update(np.full(150, 1.0), np.full(150, 1.0))
    before = tr.thresholds.envelope_threshold
    for _ in range(200):
        tr.update(np.full(150, 2.0), np.full(150, 2.0))
    assert tr.thresholds.envelope_threshold == pytest.approx(2 * before, rel=1e-6)


def test_thresholds_stay_above_floors():
    tr = ThresholdTracker()
    tr.initialize(np.zeros(10), np.zeros(10))
    th = tr.thresholds
    assert th.envelope_threshold > th.envelope_floor > 0
    assert th.energy_threshold > th.energy_floor > 0


def test_floor_noise_gives_no_candidates(rng):
    assert _detect(rng.standard_normal(60 * FS) * 0.01) == []


def _burst(n, shape="rect"):
    t = np.arange(n) / FS
    w = np.ones(n) if shape == "rect" else np.hanning(n)
    return w * np.sin(2 * np.pi * 400 * t)


def test_single_burst_bounds_match_support(rng):
    floor = 0.01
    x = rng.standard_normal(60 * FS) * floor
    n = int(0.4 * FS)
    i0 = 30 * FS
    x[i0:i0 + n] += math.sqrt(2 * 10) * floor * _burst(n)  # 10x floor power
    cands = [c for c in _detect(x) if c.accepted]
    assert len(cands) == 1
    assert abs(cands[0].start - 30.0 * F_S) <= 2
    assert abs(cands[0].end - 30.4 * F_S) <= 2


def test_two_bursts_one_second_apart(rng):
    x = rng.standard_normal(60 * FS) * 0.01
    n = int(0.3 * FS)
    for s in (30.0, 31.0):
        i0 = int(s * FS)
        x[i0:i0 + n] += 0.2 * _burst(n, "hann")
    cands = [c for c in _detect(x) if c.accepted]
    assert len(cands) == 2
    assert abs((cands[1].peak - cands[0].peak) / F_S - 1.0) <= 2 / F_S


def test_gate():
    cfg = DetectorConfig()
    ok = JmFeatures(0.2, 30 * 10.0, 0.4, 2, 1.0)  # 30 ticks, mean energy 10
    assert passes_gate(ok, 1.0, F_S, cfg)
    assert not passes_gate(JmFeatures(0.02, 300.0, 0.4, 2, 1.0), 1.0, F_S, cfg)
    assert not passes_gate(JmFeatures(2.5, 1e6, 0.4, 2, 1.0), 1.0, F_S, cfg)
    assert not passes_gate(ok, 5.0, F_S, cfg)


def test_zero_model_classifies_by_class_order():
    m = zero_model(5, 6, JM_CLASS_ORDER)
    np.testing.assert_allclose(m.forward(np.ones(5)), 0.25)
    assert classify_jm(JmFeatures(0.2, 1.0, 0.5, 1, 1.0), m) is JmClass.RUMINATION_CHEW


def test_classifier_shape_checked():
    with pytest.raises(ConfigError):
        classify_jm(JmFeatures(0.2, 1.0, 0.5, 1, 1.0), zero_model(5, 7, JM_CLASS_ORDER))
    with pytest.raises(ConfigError):
        JmRecognizer(zero_model(5, 6, ["a", "b", "c"]))


def _synthetic_audio(seed=3, duration=120.0):
    from nrfar.synth import SyntheticCorpusSpec, synth_corpus
    spec = SyntheticCorpusSpec(script=[("grazing", duration / 2), ("rumination", duration / 2)], seed=seed)
    return synth_corpus(spec).audio


def test_events_are_ordered_and_disjoint():
    events = recognize_events(_synthetic_audio(), None)
    assert len(events) > 50
    for a, b in zip(events, events[1:]):
        assert a.timestamp_s < b.timestamp_s
        assert a.end_s <= b.start_s
    for e in events:
        assert e.start_s <= e.timestamp_s <= e.end_s
        assert e.end_s - e.start_s == pytest.approx(e.features.duration_s)


@given(st.lists(st.integers(1, 4000), min_size=1, max_size=40))
def test_chunked_recognition_matches_one_shot(chunks):
    audio = _synthetic_audio(duration=40.0)
    whole = recognize_events(audio, None)
    rec = JmRecognizer(None)
    got = []
    pos = 0
    x = audio.samples
    sizes = list(chunks)
    while pos < len(x):
        for c in sizes:
            got += rec.process(x[pos:pos + c])
            pos += c
            if pos >= len(x):
                break
    got += rec.finish()
    assert got == whole


@pytest.mark.parametrize("c", [0.25, 4.0, 3.7])
def test_amplitude_scale_leaves_events_unchanged(c):
    audio = _synthetic_audio(seed=5)
    base = [(e.timestamp_s, e.start_s, e.end_s) for e in recognize_events(audio, None) if e.timestamp_s > 30]
    scaled = AudioSignal(audio.samples * c, audio.sample_rate_hz)
    other = [(e.timestamp_s, e.start_s, e.end_s) for e in recognize_events(scaled, None) if e.timestamp_s > 30]
    assert other == base


def test_deterministic():
    audio = _synthetic_audio()
    assert recognize_events(audio, None) == recognize_events(audio, None)


def test_jsonl_round_trip(tmp_path):
    events = recognize_events(_synthetic_audio(), zero_model(5, 6, JM_CLASS_ORDER))
    path = tmp_path / "e.jsonl"
    write_events_jsonl(path, events)
    assert read_events_jsonl(path) == events
    first = path.read_text().splitlines()[0]
    assert first.startswith('{"t": ') and '"class": "rumination-chew"' in first


def test_event_json_fields():
    e = JmEvent(1.5, JmClass.BITE, JmFeatures(0.1, 2.0, 0.3, 1, 0.5), 1.45, 1.55)
    assert JmEvent.from_json(e.to_json()) == e


def test_detector_rejects_misaligned_streams():
    with pytest.raises(ConfigError):
        JmDetector().feed(np.zeros(3), np.zeros(4))


def test_detector_config_validation():
    with pytest.raises(ConfigError):
        DetectorConfig(multiplier_min=7.0).validate()
    with pytest.raises(ConfigError):
        DetectorConfig(symmetry="x").validate()


def test_signal_processor_feeds_detector_incrementally():
    audio = _synthetic_audio(duration=30.0)
    proc, det = SignalProcessor(DspConfig()), JmDetector()
    out = []
    for i in range(0, len(audio), 1000):
        d = proc.process(audio.samples[i:i + 1000])
        out += det.feed(d.envelope, d.energy)
    out += det.flush()
    d = derive(audio)
    assert out == detect_candidates(d.envelope, d.energy)
