import csv
import json
import math

import numpy as np
import pytest

from nrfar.errors import ProtocolError
from nrfar.noise import NoiseSource
from nrfar.pipeline import NrfarModels
from nrfar.protocol import (FoldPlan, ProtocolConfig, load_fold_models, plan_folds, run_protocol,
                            save_fold_models, snr_label)
from nrfar.synth import make_corpus, write_noise_clips


@pytest.fixture(scope="module")
def tiny_corpus():
    return make_corpus(2, 600.0, seed=5)


@pytest.fixture(scope="module")
def tiny_result(tiny_corpus, small_models, small_cfg):
    plan = FoldPlan(((tiny_corpus[0].name,), (tiny_corpus[1].name,)))
    return run_protocol(tiny_corpus, {0: small_models, 1: small_models}, plan, ProtocolConfig(), small_cfg)


def test_snr_label():
    assert snr_label(math.inf) == "clean" and snr_label(-5.0) == "-5" and snr_label(20.0) == "20"


def test_plan_folds(small_corpus):
    plan = plan_folds(small_corpus, 2, seed=0)
    assert sorted(n for f in plan.folds for n in f) == sorted(r.name for r in small_corpus)
    assert plan.train_names(0) == list(plan.folds[1])
    with pytest.raises(ProtocolError):
        plan.fold_of("nope")


def test_missing_fold_model(tiny_corpus, small_models):
    plan = FoldPlan(((tiny_corpus[0].name,), (tiny_corpus[1].name,)))
    with pytest.raises(ProtocolError):
        run_protocol(tiny_corpus, {0: small_models}, plan)


def test_fold_model_files(tmp_path, small_models):
    save_fold_models(tmp_path, {0: small_models})
    back = load_fold_models(tmp_path, 1)
    np.testing.assert_array_equal(back[0].jm.w1, small_models.jm.w1)
    with pytest.raises(ProtocolError):
        load_fold_models(tmp_path, 2)


def test_cells_cover_the_grid(tiny_result):
    cells = tiny_result.cells()
    assert len(cells) == 2 * 9
    assert {c["snr"] for c in cells} == {"clean", "20", "15", "10", "5", "0", "-5", "-10", "-15"}
    assert all(c["n"] == 2 for c in cells)
    clean = {c["method"]: c["mean"] for c in cells if c["snr"] == "clean"}
    loud = {c["method"]: c["mean"] for c in cells if c["snr"] == "-15"}
    assert clean["nrfar"] >= loud["nrfar"]


def test_std_is_sample_std(tiny_result):
    for c in tiny_result.cells():
        v = [r["balanced_accuracy"] for r in tiny_result.scores
             if (r["method"], r["source"], r["snr"]) == (c["method"], c["source"], c["snr"])]
        assert c["std"] == pytest.approx(np.std(v, ddof=1), abs=1e-15)


def test_written_tables(tiny_result, tmp_path):
    paths = tiny_result.write(tmp_path, {"config_hash": "abc", "seed": 3})
    names = sorted(p.name for p in paths)
    assert names == ["cells.csv", "scores.csv", "summary.json", "wilcoxon_nrfar_vs_nrfar-unsmoothed.csv"]
    lines = (tmp_path / "wilcoxon_nrfar_vs_nrfar-unsmoothed.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=abc seed=3"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["snr", "white"]
    assert [r[0] for r in rows[1:]] == ["clean", "20", "15", "10", "5", "0", "-5", "-10", "-15"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["seed"] == 3 and len(summary["cells"]) == 18


def test_parallel_matches_serial(tiny_corpus, small_models, small_cfg, tmp_path):
    clip_dir = tmp_path / "nat"
    write_noise_clips(clip_dir, per_kind=1, duration_s=20.0)
    plan = FoldPlan(((tiny_corpus[0].name,), (tiny_corpus[1].name,)))
    models = {0: small_models, 1: small_models}
    kw = dict(snr_grid=(10.0, -10.0), sources=(NoiseSource(), NoiseSource("clips", str(clip_dir))))
    a = run_protocol(tiny_corpus, models, plan, ProtocolConfig(**kw, workers=1), small_cfg)
    b = run_protocol(tiny_corpus, models, plan, ProtocolConfig(**kw, workers=2), small_cfg)
    assert a.scores == b.scores
    assert {r["source"] for r in a.scores} == {"white", "nat"}
