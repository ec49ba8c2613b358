import csv
import json
import re
import shutil

import numpy as np
import pytest

from nrfar.audio_io import write_wav
from nrfar.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from nrfar.dsp import AudioSignal
from nrfar.synth import SyntheticCorpusSpec, make_corpus, synth_corpus, write_recording

SMALL_YAML = """
train:
  learning_rates: [0.1]
  hidden_sizes: [4]
  max_iter: 150
experiment:
  n_folds: 2
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(SMALL_YAML)
    return str(p)


@pytest.fixture(scope="module")
def grazing_wav(tmp_path_factory):
    p = tmp_path_factory.mktemp("wav") / "graze.wav"
    write_wav(p, synth_corpus(SyntheticCorpusSpec([("grazing", 900.0)], seed=21)).audio)
    return p


@pytest.fixture(scope="module")
def tiny_corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    for r in make_corpus(2, 600.0, seed=5):
        write_recording(d, r)
    return d


def _recognize(wav, models, out):
    return main(["recognize", str(wav), "--jm-model", str(models / "jm.json"),
                 "--activity-model", str(models / "activity.json"), "--out", str(out)])


def _data_rows(path):
    return list(csv.DictReader(line for line in path.read_text().splitlines() if not line.startswith("#")))


def test_recognize_grazing_file(grazing_wav, model_files, tmp_path):
    assert _recognize(grazing_wav, model_files, tmp_path / "a") == EXIT_OK
    segs = _data_rows(tmp_path / "a" / "graze.segments.csv")
    assert len(segs) == 3 and {s["smoothed_label"] for s in segs} == {"grazing"}
    assert (tmp_path / "a" / "graze.segments.csv").read_text().startswith("# config_hash=")
    assert _recognize(grazing_wav, model_files, tmp_path / "b") == EXIT_OK
    for name in ("graze.segments.csv", "graze.bouts.csv", "graze.events.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_recognize_empty_file(model_files, tmp_path):
    wav = tmp_path / "empty.wav"
    write_wav(wav, AudioSignal(np.zeros(0), 2000))
    assert _recognize(wav, model_files, tmp_path / "o") == EXIT_OK
    assert _data_rows(tmp_path / "o" / "empty.segments.csv") == []
    assert (tmp_path / "o" / "empty.events.jsonl").read_text() == ""


def test_recognize_bad_inputs(model_files, tmp_path, capsys):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wav file")
    assert _recognize(bad, model_files, tmp_path / "o") == EXIT_DATA
    assert "error" in capsys.readouterr().err
    assert main(["recognize", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_mix_reports_exact_snr(grazing_wav, tmp_path, capsys):
    assert main(["mix", str(grazing_wav), str(tmp_path / "m.wav"), "--snr", "0", "--noise", "white"]) == EXIT_OK
    achieved = float(re.search(r"achieved SNR (\S+) dB", capsys.readouterr().out).group(1))
    assert abs(achieved) < 1e-6
    assert (tmp_path / "m.wav").exists()


def test_mix_rejects_bad_snr_before_reading(tmp_path):
    assert main(["mix", str(tmp_path / "missing.wav"), str(tmp_path / "o.wav"), "--snr", "loud"]) == EXIT_CONFIG
    assert main(["mix", str(tmp_path / "missing.wav"), str(tmp_path / "o.wav"), "--snr", "3"]) == EXIT_DATA


def test_ops_table(capsys):
    assert main(["ops", "--f-i", "2000", "--events", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    for value in ("16,000", "24,450", "43,060", "795", "12,918,795"):
        assert value in out


def test_synth_from_script(tmp_path, capsys):
    script = tmp_path / "demo.yaml"
    script.write_text("seed: 4\nrecordings:\n  - name: demo\n    script: [[grazing, 60], [other, 30]]\n")
    assert main(["synth", "--script", str(script), "--out", str(tmp_path / "c")]) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == ["demo.events.jsonl", "demo.labels.csv", "demo.wav"]
    script.write_text("recordings:\n  - name: demo\n    script: [[sleeping, 60]]\n")
    assert main(["synth", "--script", str(script), "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert not (tmp_path / "d").exists()


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("detector: {nonsense: 1}\n")
    assert main(["--config", str(cfg), "ops"]) == EXIT_CONFIG


def test_experiment_dry_run(tiny_corpus_dir, tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["experiment", "--corpus", str(tiny_corpus_dir), "--out", str(out), "--train", "--dry-run"]) == 0
    text = capsys.readouterr().out
    assert "SNR grid: clean, 20, 15, 10, 5, 0, -5, -10, -15" in text
    assert not out.exists()


def test_experiment_partial_corpus(tiny_corpus_dir, tmp_path, capsys, small_config):
    d = tmp_path / "partial"
    shutil.copytree(tiny_corpus_dir, d)
    (d / "rec001.wav").unlink()
    code = main(["--config", small_config, "experiment", "--corpus", str(d), "--out", str(tmp_path / "r"), "--train"])
    assert code == EXIT_DATA
    assert "rec001.wav" in capsys.readouterr().err


def test_experiment_with_models_is_reproducible(tiny_corpus_dir, model_files, tmp_path, small_config):
    runs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["--config", small_config, "experiment", "--corpus", str(tiny_corpus_dir),
                     "--models", str(model_files), "--out", str(out)]) == EXIT_OK
        runs.append(json.loads((out / "manifest.json").read_text()))
    assert runs[0] == runs[1]
    out = tmp_path / "a"
    svg = (out / "curve_white.svg").read_text()
    assert svg.count("<svg") == 1
    cells = _data_rows(out / "cells.csv")
    assert sorted({c["snr"] for c in cells if c["method"] == "nrfar"}) == sorted(
        ["clean", "20", "15", "10", "5", "0", "-5", "-10", "-15"])


def test_experiment_needs_models_or_train(tiny_corpus_dir, tmp_path):
    assert main(["experiment", "--corpus", str(tiny_corpus_dir), "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_train_command(small_corpus, tmp_path, small_config):
    d = tmp_path / "corpus"
    for r in small_corpus:
        write_recording(d, r)
    out = tmp_path / "m"
    assert main(["--config", small_config, "train", "--corpus", str(d), "--out", str(out)]) == EXIT_OK
    meta = json.loads((out / "jm.json").read_text())
    assert meta["metadata"]["config_hash"] and (out / "manifest.json").exists()


def test_train_command_small_corpus_fails_cleanly(tiny_corpus_dir, tmp_path, small_config, capsys):
    code = main(["--config", small_config, "train", "--corpus", str(tiny_corpus_dir), "--out", str(tmp_path / "m")])
    assert code == EXIT_DATA and "minority class" in capsys.readouterr().err
