"""Command-line entry point: recognize, experiment, synth, mix, train, ops."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import yaml

from . import __version__
from .activity import write_bouts_csv, write_segments_csv
from .audio_io import read_wav, write_wav
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, NrfarError
from .jm import write_events_jsonl
from .neural import MlpModel
from .noise import NoiseSource, mix_components, snr_db
from .ops import CostParams, cost, format_table

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _write_manifest(out: Path, cfg: RunConfig, files: list[Path], extra: dict | None = None) -> Path:
    digest = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(files)}
    body = {**cfg.stamp(), "version": __version__, "files": digest, **(extra or {})}
    path = out / "manifest.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def _stamp_comment(cfg: RunConfig) -> str:
    s = cfg.stamp()
    return f"config_hash={s['config_hash']} seed={s['seed']}"


def _load_model(path, what: str) -> MlpModel:
    if not path:
        raise ConfigError(f"no {what} model given (flag or config)")
    try:
        return MlpModel.load(path)
    except OSError as exc:
        raise DataError(f"cannot read {what} model {path}: {exc}") from exc


# -- subcommands -------------------------------------------------------------------

def cmd_recognize(args, cfg: RunConfig) -> int:
    from .pipeline import NrfarModels, recognize

    models = NrfarModels(_load_model(args.jm_model or cfg.jm_model, "JM"),
                         _load_model(args.activity_model or cfg.activity_model, "activity"))
    models.jm.require_shape(5, 4, hidden=6)
    models.activity.require_shape(5, 3, hidden=(4, 10))
    audio = read_wav(args.wav, expected_rate=cfg.dsp.sample_rate_hz)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = recognize(audio, models, cfg.pipeline())
    stem = Path(args.wav).stem
    files = [out / f"{stem}.events.jsonl", out / f"{stem}.segments.csv", out / f"{stem}.bouts.csv"]
    write_events_jsonl(files[0], rec.events)
    write_segments_csv(files[1], rec.segments, _stamp_comment(cfg))
    write_bouts_csv(files[2], rec.bouts, _stamp_comment(cfg))
    _write_manifest(out, cfg, files, {"input": Path(args.wav).name, "duration_s": audio.duration_s})
    print(f"{len(rec.events)} JM events, {len(rec.segments)} segments, {len(rec.bouts)} bouts -> {out}")
    return EXIT_OK


def _read_corpus(directory, cfg: RunConfig):
    from .synth import list_recordings, missing_files, read_recording

    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"corpus directory {d} does not exist")
    missing = missing_files(d)
    if missing:
        raise DataError("incomplete corpus, missing: " + ", ".join(missing))
    names = list_recordings(d)
    if not names:
        raise DataError(f"no recordings in {d}")
    return [read_recording(d, n, cfg.dsp.sample_rate_hz) for n in names]


def cmd_experiment(args, cfg: RunConfig) -> int:
    from .plots import plot_curves
    from .protocol import load_fold_models, plan_folds, run_protocol, save_fold_models, train_folds

    e = cfg.experiment
    if args.workers:
        import dataclasses
        cfg = dataclasses.replace(cfg, experiment=dataclasses.replace(e, workers=args.workers)).validate()
        e = cfg.experiment
    pcfg = cfg.protocol()
    grid = (["clean"] if e.include_clean else []) + [f"{s:g}" for s in e.snr_grid]
    plan_text = [
        f"config {cfg.stamp()['config_hash']} seed {cfg.seed}",
        f"corpus {args.corpus}, {e.n_folds} folds, models: {'train' if args.train else (args.models or 'none given')}",
        f"noise sources: {', '.join(s.label for s in pcfg.sources)}",
        f"SNR grid: {', '.join(grid)}",
        f"cells: {len(pcfg.sources) * len(grid)} x recordings, workers {e.workers}",
    ]
    if args.dry_run:
        print("\n".join(plan_text))
        return EXIT_OK
    if not args.train and not args.models:
        raise ConfigError("give --models DIR or --train")
    corpus = _read_corpus(args.corpus, cfg)
    plan = plan_folds(corpus, e.n_folds, cfg.seed, cfg.balance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.train:
        models = train_folds(corpus, plan, cfg.pipeline())
        save_fold_models(out / "models", models)
    else:
        models = load_fold_models(args.models, e.n_folds)
    result = run_protocol(corpus, models, plan, pcfg, cfg.pipeline())
    files = result.write(out, cfg.stamp())
    cells = result.cells()
    for src in pcfg.sources:
        files.append(plot_curves(cells, src.label, out / f"curve_{src.label}.svg"))
    (out / "folds.json").write_text(json.dumps([list(f) for f in plan.folds], indent=2) + "\n")
    files.append(out / "folds.json")
    _write_manifest(out, cfg, files)
    for c in sorted(cells, key=lambda c: (c["method"], c["source"])):
        print(f"{c['method']:>18} {c['source']:>10} {c['snr']:>6}  {c['mean']:.4f} ± {c['std']:.4f} (n={c['n']})")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    from .synth import SyntheticCorpusSpec, make_corpus, synth_corpus, write_noise_clips, write_recording

    recs = []
    if args.script:
        try:
            spec = yaml.safe_load(Path(args.script).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read script {args.script}: {exc}") from exc
        try:
            seed = int(spec.get("seed", cfg.seed))
            specs = [(str(r.get("name", f"rec{i:03d}")),
                      SyntheticCorpusSpec(script=[(str(a), float(d)) for a, d in r["script"]], seed=seed + i,
                                          floor_rms=cfg.corpus.floor_rms))
                     for i, r in enumerate(spec.get("recordings", []))]
            for _, s in specs:
                s.validate()
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed script {args.script}: {exc}") from exc
        if specs:
            recs = [synth_corpus(s, name) for name, s in specs]
        else:
            n = int(spec.get("n_recordings", cfg.corpus.n_recordings))
            dur = float(spec.get("duration_s", cfg.corpus.duration_s))
            recs = make_corpus(n, dur, seed, floor_rms=cfg.corpus.floor_rms)
    else:
        recs = make_corpus(cfg.corpus.n_recordings, cfg.corpus.duration_s, cfg.seed, floor_rms=cfg.corpus.floor_rms)
    out = Path(args.out)
    for r in recs:
        write_recording(out, r)
    if args.noise_clips:
        write_noise_clips(args.noise_clips, seed=cfg.seed)
    print(f"{len(recs)} recordings, {sum(r.duration_s for r in recs) / 3600:.2f} h -> {out}")
    return EXIT_OK


def cmd_mix(args, cfg: RunConfig) -> int:
    try:
        snr = math.inf if args.snr.lower() == "clean" else float(args.snr)
    except ValueError as exc:
        raise ConfigError(f"--snr must be a number in dB or 'clean', got {args.snr!r}") from exc
    source = NoiseSource() if args.noise == "white" else NoiseSource("clips", args.noise)
    audio = read_wav(args.input, expected_rate=cfg.dsp.sample_rate_hz)
    seed = cfg.seed if args.seed is None else args.seed
    noise = None if math.isinf(snr) else source.generate(len(audio), audio.sample_rate_hz, seed=seed)
    mix = mix_components(audio, noise, snr)
    write_wav(args.output, mix.audio)
    achieved = math.inf if math.isinf(snr) else snr_db(mix.signal_part, mix.noise_part)
    print(f"achieved SNR {achieved:.9f} dB (target {snr:g} dB), noise gain {mix.noise_gain:.6g}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .pipeline import LabeledRecording, train_nrfar
    from .protocol import label_clean

    corpus = _read_corpus(args.corpus, cfg)
    pcfg = cfg.pipeline()
    labeled: dict[str, LabeledRecording] = label_clean(corpus, pcfg)
    models = train_nrfar(list(labeled.values()), pcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m in (models.jm, models.activity):
        m.metadata.update(cfg.stamp())
    models.jm.save(out / "jm.json")
    models.activity.save(out / "activity.json")
    _write_manifest(out, cfg, [out / "jm.json", out / "activity.json"],
                    {"jm_validation": models.jm_search.score, "activity_validation": models.activity_search.score})
    print(f"JM model: lr {models.jm_search.learning_rate:g}, validation balanced accuracy {models.jm_search.score:.4f}")
    print(f"activity model: {models.activity_search.hidden} hidden, lr {models.activity_search.learning_rate:g}, "
          f"validation balanced accuracy {models.activity_search.score:.4f}")
    return EXIT_OK


def cmd_ops(args, cfg: RunConfig) -> int:
    params = CostParams(f_i=args.f_i, f_s=args.f_s, jm_events_per_s=args.events, segment_s=args.segment_s)
    budget = cost(params, "NRFAR")
    print(format_table(budget, args.format), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrfar", description="Noise-robust foraging activity recognition.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="YAML run configuration")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("recognize", help="recognize JM events and activities in a WAV file")
    r.add_argument("wav")
    r.add_argument("--jm-model")
    r.add_argument("--activity-model")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recognize)

    e = sub.add_parser("experiment", help="cross-validated noise-robustness protocol")
    e.add_argument("--corpus", required=True)
    e.add_argument("--out", default="results")
    e.add_argument("--models", help="directory with fold<k>_jm.json / fold<k>_activity.json")
    e.add_argument("--train", action="store_true", help="train the fold models first")
    e.add_argument("--dry-run", action="store_true")
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_experiment)

    s = sub.add_parser("synth", help="write a labeled synthetic corpus")
    s.add_argument("--script", help="YAML with recordings/scripts or n_recordings/duration_s")
    s.add_argument("--out", required=True)
    s.add_argument("--noise-clips", help="also write environmental noise clips here")
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("mix", help="add noise at a whole-file SNR")
    m.add_argument("input")
    m.add_argument("output")
    m.add_argument("--snr", required=True, help="dB, or 'clean'")
    m.add_argument("--noise", default="white", help="'white' or a directory of WAV clips")
    m.add_argument("--seed", type=int)
    m.set_defaults(func=cmd_mix)

    t = sub.add_parser("train", help="train JM and activity models on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("ops", aliases=["ops-budget"], help="operation-count table")
    o.add_argument("--f-i", type=int, default=2000)
    o.add_argument("--f-s", type=int, default=150)
    o.add_argument("--events", type=float, default=2.0, help="JM events per second")
    o.add_argument("--segment-s", type=int, default=300)
    o.add_argument("--format", choices=("md", "csv"), default="md")
    o.set_defaults(func=cmd_ops)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NrfarError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
