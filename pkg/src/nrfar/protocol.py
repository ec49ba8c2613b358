"""Cross-validated noise-robustness protocol over a labeled corpus.

Each fold's models are trained on clean audio of the other folds' recordings.
Every test recording is then contaminated with each noise source at each SNR
and scored frame by frame. The scores are aggregated per cell (method,
noise source, SNR) and compared pairwise between methods.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activity import ActivityLabel
from .errors import ProtocolError, UndefinedTestError
from .evaluation import BalancePlan, composition, expand_frames, make_folds, wilcoxon_signed_rank
from .metrics import balanced_accuracy, confusion_matrix
from .neural import MlpModel
from .noise import CLEAN, SNR_GRID_DB, NoiseSource, load_clips, mix_at_snr
from .pipeline import (LabeledRecording, NrfarModels, PipelineConfig, detect, predicted_frames,
                       recognize_candidates, train_nrfar)
from .synth import SyntheticRecording

# method name -> smoothing on/off; both share the fold models
DEFAULT_METHODS = {"nrfar": True, "nrfar-unsmoothed": False}


def snr_label(snr: float) -> str:
    return "clean" if math.isinf(snr) else f"{snr:g}"


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[str, ...], ...]  # recording names per fold
    balance: BalancePlan = field(default_factory=BalancePlan)

    def fold_of(self, name: str) -> int:
        for k, f in enumerate(self.folds):
            if name in f:
                return k
        raise ProtocolError(f"recording {name!r} is in no fold")

    def train_names(self, k: int) -> list[str]:
        return [n for j, f in enumerate(self.folds) if j != k for n in f]


def plan_folds(corpus: list[SyntheticRecording], n_folds: int = 5, seed: int = 0,
               balance: BalancePlan | None = None) -> FoldPlan:
    comp = np.array([composition(r.bouts) for r in corpus])
    idx = make_folds(comp, n_folds, seed)
    return FoldPlan(tuple(tuple(corpus[i].name for i in f) for f in idx), balance or BalancePlan())


def label_clean(corpus: list[SyntheticRecording], cfg: PipelineConfig) -> dict[str, LabeledRecording]:
    out = {}
    for r in corpus:
        audio = mix_at_snr(r.audio, NoiseSource(), CLEAN)
        out[r.name] = LabeledRecording(r.name, r.duration_s, detect(audio, cfg), r.bouts, r.events)
    return out


def train_folds(corpus: list[SyntheticRecording], plan: FoldPlan,
                cfg: PipelineConfig | None = None,
                labeled: dict[str, LabeledRecording] | None = None) -> dict[int, NrfarModels]:
    cfg = cfg or PipelineConfig()
    labeled = labeled or label_clean(corpus, cfg)
    return {k: train_nrfar([labeled[n] for n in plan.train_names(k)], cfg) for k in range(len(plan.folds))}


def save_fold_models(directory, models: dict[int, NrfarModels]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, m in models.items():
        m.jm.save(d / f"fold{k}_jm.json")
        m.activity.save(d / f"fold{k}_activity.json")


def load_fold_models(directory, n_folds: int) -> dict[int, NrfarModels]:
    d = Path(directory)
    out = {}
    for k in range(n_folds):
        jm, act = d / f"fold{k}_jm.json", d / f"fold{k}_activity.json"
        if not jm.exists() or not act.exists():
            raise ProtocolError(f"fold {k} model missing in {d}")
        out[k] = NrfarModels(MlpModel.load(jm), MlpModel.load(act))
    return out


@dataclass(frozen=True)
class ProtocolConfig:
    snr_grid: tuple[float, ...] = SNR_GRID_DB
    sources: tuple[NoiseSource, ...] = (NoiseSource(),)
    include_clean: bool = True
    noise_seed: int = 1000
    workers: int = 1


@dataclass
class ProtocolResult:
    scores: list[dict]  # one row per (method, source, snr, recording)
    confusions: dict[tuple[str, str, str], np.ndarray]  # (method, source, snr) -> summed counts

    def cells(self) -> list[dict]:
        """n, mean and std of per-recording balanced accuracy per (method, source, snr)."""
        groups: dict[tuple, list[float]] = {}
        for row in self.scores:
            groups.setdefault((row["method"], row["source"], row["snr"]), []).append(row["balanced_accuracy"])
        return [{"method": m, "source": s, "snr": snr, "n": len(v), "mean": float(np.mean(v)),
                 "std": float(np.std(v, ddof=1)) if len(v) > 1 else 0.0}
                for (m, s, snr), v in groups.items()]

    def paired(self, method: str, source: str, snr: str) -> dict[str, float]:
        return {r["recording"]: r["balanced_accuracy"] for r in self.scores
                if r["method"] == method and r["source"] == source and r["snr"] == snr}

    def wilcoxon_tables(self) -> dict[tuple[str, str], dict[str, dict[str, float]]]:
        """p-values for every method pair; table[pair][snr][source], NaN when undefined."""
        methods = sorted({r["method"] for r in self.scores})
        conds = sorted({(r["source"], r["snr"]) for r in self.scores})
        out = {}
        for i, a in enumerate(methods):
            for b in methods[i + 1:]:
                table: dict[str, dict[str, float]] = {}
                for src, snr in conds:
                    pa, pb = self.paired(a, src, snr), self.paired(b, src, snr)
                    keys = sorted(set(pa) & set(pb))
                    try:
                        p = wilcoxon_signed_rank([pa[k] for k in keys], [pb[k] for k in keys]).p_value
                    except UndefinedTestError:
                        p = float("nan")
                    table.setdefault(snr, {})[src] = p
                out[(a, b)] = table
        return out

    def write(self, directory, stamp: dict | None = None) -> list[Path]:
        """CSV tables plus a JSON summary; ``stamp`` (config hash, seed) goes into every file."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        stamp = stamp or {}
        comment = " ".join(f"{k}={v}" for k, v in sorted(stamp.items()))
        paths = []

        def _csv(name, header, rows):
            p = d / name
            with open(p, "w", newline="") as fh:
                if comment:
                    fh.write(f"# {comment}\n")
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
            paths.append(p)

        _csv("scores.csv", ["method", "source", "snr", "recording", "balanced_accuracy"],
             [[r["method"], r["source"], r["snr"], r["recording"], repr(r["balanced_accuracy"])]
              for r in self.scores])
        cells = self.cells()
        _csv("cells.csv", ["method", "source", "snr", "n", "mean", "std"],
             [[c["method"], c["source"], c["snr"], c["n"], repr(c["mean"]), repr(c["std"])] for c in cells])
        tables = self.wilcoxon_tables()
        for (a, b), table in tables.items():
            sources = sorted({s for row in table.values() for s in row})
            _csv(f"wilcoxon_{a}_vs_{b}.csv", ["snr", *sources],
                 [[snr, *[repr(table[snr].get(s, float("nan"))) for s in sources]] for snr in _snr_order(table)])
        summary = {
            **stamp,
            "cells": cells,
            "confusions": {"|".join(k): v.tolist() for k, v in sorted(self.confusions.items())},
            "wilcoxon": {f"{a}|{b}": t for (a, b), t in tables.items()},
        }
        p = d / "summary.json"
        p.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n")
        paths.append(p)
        return paths


def _snr_order(keys) -> list[str]:
    def key(s):
        return (-math.inf,) if s == "clean" else (-float(s),)
    return sorted(keys, key=key)


# -- worker side -------------------------------------------------------------------

_STATE: dict = {}


def _init_worker(corpus, models, plan, cfg, methods, clips):
    _STATE.update(corpus={r.name: r for r in corpus}, models=models, plan=plan, cfg=cfg,
                  methods=methods, clips=clips)


def _score_task(task):
    src_idx, source, snr, name, seed = task
    rec: SyntheticRecording = _STATE["corpus"][name]
    cfg: PipelineConfig = _STATE["cfg"]
    models = _STATE["models"][_STATE["plan"].fold_of(name)]
    audio = mix_at_snr(rec.audio, source, snr, seed=seed, clips=_STATE["clips"].get(src_idx))
    cands = detect(audio, cfg)
    truth = expand_frames(rec.bouts, rec.duration_s).labels
    out = []
    for method, smooth in _STATE["methods"].items():
        pred = predicted_frames(recognize_candidates(cands, rec.duration_s, models, cfg, smooth), rec.duration_s)
        out.append((method, balanced_accuracy(truth, pred), confusion_matrix(truth, pred, len(ActivityLabel))))
    return out


def run_protocol(corpus: list[SyntheticRecording], models: dict[int, NrfarModels], plan: FoldPlan,
                 pcfg: ProtocolConfig | None = None, cfg: PipelineConfig | None = None,
                 methods: dict[str, bool] | None = None) -> ProtocolResult:
    pcfg = pcfg or ProtocolConfig()
    cfg = cfg or PipelineConfig()
    methods = methods or DEFAULT_METHODS
    for k in range(len(plan.folds)):
        if k not in models:
            raise ProtocolError(f"no trained model for fold {k}")
    clips = {i: load_clips(s.clip_dir, cfg.dsp.sample_rate_hz)
             for i, s in enumerate(pcfg.sources) if s.kind == "clips"}
    tasks = []
    for i_src, src in enumerate(pcfg.sources):
        grid = ((CLEAN,) if pcfg.include_clean else ()) + tuple(pcfg.snr_grid)
        for snr in grid:
            for i_rec, rec in enumerate(corpus):
                # same noise realization at every SNR; only its gain changes
                tasks.append((i_src, src, snr, rec.name, pcfg.noise_seed + i_rec))
    init = (corpus, models, plan, cfg, methods, clips)
    if pcfg.workers > 1:
        with ProcessPoolExecutor(pcfg.workers, initializer=_init_worker, initargs=init) as ex:
            results = list(ex.map(_score_task, tasks))
    else:
        _init_worker(*init)
        try:
            results = [_score_task(t) for t in tasks]
        finally:
            _STATE.clear()
    scores, confusions = [], {}
    for (i_src, src, snr, name, _), res in zip(tasks, results):
        for method, ba, cm in res:
            key = (method, src.label, snr_label(snr))
            scores.append({"method": method, "source": src.label, "snr": snr_label(snr),
                           "recording": name, "balanced_accuracy": float(ba)})
            confusions[key] = confusions.get(key, 0) + cm
    return ProtocolResult(scores, confusions)
