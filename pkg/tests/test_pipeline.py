import numpy as np
import pytest

from nrfar.activity import ActivityLabel, Bout
from nrfar.errors import TrainingError
from nrfar.evaluation import expand_frames
from nrfar.jm import AdaptiveThresholds, Candidate, JmClass, JmFeatures
from nrfar.metrics import balanced_accuracy
from nrfar.pipeline import (LabeledRecording, PipelineConfig, detect, match_candidates, predicted_frames,
                            recognize, recognize_candidates, segment_dataset, segment_truth,
                            stratified_split, train_nrfar)
from nrfar.synth import SyntheticCorpusSpec, TruthEvent, synth_corpus

G, R, O = ActivityLabel.GRAZING, ActivityLabel.RUMINATION, ActivityLabel.OTHER
F = JmFeatures(0.2, 1.0, 0.4, 2, 1.0)
TH = AdaptiveThresholds(1.0, 1.0, 0.5, 0.5, 10.0)


def cand(peak, accepted=True):
    return Candidate(peak, peak - 10, peak + 10, F, TH, accepted)


def test_match_candidates():
    truth = [TruthEvent(1.0, 1.2, JmClass.BITE), TruthEvent(2.0, 2.3, JmClass.RUMINATION_CHEW)]
    cands = [cand(165), cand(150 * 2.35), cand(150 * 5), cand(170, accepted=False), cand(168)]
    got = match_candidates(cands, truth, 150, 0.1)
    # the second candidate near the first truth event finds it already used
    assert got.tolist() == [int(JmClass.BITE), int(JmClass.RUMINATION_CHEW), -1, -1, -1]


def test_segment_truth_majority():
    bouts = [Bout(0, 160, G), Bout(160, 700, R)]
    assert segment_truth(bouts, 700.0, 300.0).tolist() == [int(G), int(R), int(R)]


def test_segment_dataset_skips_partial_segment():
    x, y = segment_dataset([], [Bout(0, 700, O)], 700.0, 300.0)
    assert x.shape == (2, 5) and y.tolist() == [int(O)] * 2


def test_stratified_split():
    y = np.array([0] * 40 + [1] * 12 + [2])
    tr, va = stratified_split(y, 0.25, seed=1)
    assert set(tr).isdisjoint(va) and len(tr) + len(va) == len(y)
    assert np.bincount(y[va], minlength=3).tolist() == [10, 3, 0]
    assert stratified_split(y, 0.25, 1)[1].tolist() == va.tolist()


def test_training_needs_matches():
    rec = LabeledRecording("x", 600.0, [], [Bout(0, 600, O)])
    with pytest.raises(TrainingError):
        train_nrfar([rec])


def test_trained_system_on_unseen_recording(small_models, small_cfg):
    rec = synth_corpus(SyntheticCorpusSpec([("grazing", 900.0), ("other", 900.0), ("rumination", 900.0)], seed=77))
    out = recognize(rec.audio, small_models, small_cfg)
    truth = expand_frames(rec.bouts, rec.duration_s).labels
    assert balanced_accuracy(truth, predicted_frames(out, rec.duration_s), 3) >= 0.9
    assert [s.smoothed_label for s in out.segments] == [G] * 3 + [O] * 3 + [R] * 3
    ts = [e.timestamp_s for e in out.events]
    assert ts == sorted(ts)


def test_recognize_is_detect_then_classify(small_models, small_corpus, small_cfg):
    rec = small_corpus[0]
    a = recognize(rec.audio, small_models, small_cfg)
    b = recognize_candidates(detect(rec.audio, small_cfg), rec.duration_s, small_models, small_cfg)
    assert a.segments == b.segments and a.bouts == b.bouts


def test_training_is_seeded(small_labeled, small_models, small_cfg):
    again = train_nrfar(list(small_labeled.values()), small_cfg)
    for m, n in ((again.jm, small_models.jm), (again.activity, small_models.activity)):
        np.testing.assert_array_equal(m.w1, n.w1)
        np.testing.assert_array_equal(m.w2, n.w2)


def test_config_validation():
    from nrfar.errors import ConfigError
    from nrfar.neural import TrainConfig

    with pytest.raises(ConfigError):
        PipelineConfig(train=TrainConfig(hidden_sizes=())).validate()
