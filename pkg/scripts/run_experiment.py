"""Train fold models and run the clean + white + natural noise sweep in memory.

Writes tables, SVG curves and the fold models under --out. Equivalent to
``nrfar synth`` followed by ``nrfar experiment --train`` but skips the WAV round trip.
"""

import argparse
import json
import time
from pathlib import Path

from nrfar.config import ExperimentConfig, NoiseSpec, RunConfig
from nrfar.metrics import row_normalized
from nrfar.plots import plot_curves
from nrfar.protocol import label_clean, plan_folds, run_protocol, save_fold_models, train_folds
from nrfar.synth import make_corpus, write_noise_clips


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results/synthetic")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--duration-s", type=float, default=4320.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    out = Path(args.out)
    clip_dir = out / "natural_clips"
    write_noise_clips(clip_dir, seed=args.seed)
    cfg = RunConfig(seed=args.seed, experiment=ExperimentConfig(
        noise=(NoiseSpec(), NoiseSpec("clips", str(clip_dir), "natural")), workers=args.workers)).validate()
    pcfg = cfg.pipeline()

    t0 = time.perf_counter()
    corpus = make_corpus(args.n, args.duration_s, seed=args.seed)
    plan = plan_folds(corpus, cfg.experiment.n_folds, cfg.seed, cfg.balance)
    models = train_folds(corpus, plan, pcfg, label_clean(corpus, pcfg))
    save_fold_models(out / "models", models)
    print(f"trained {len(models)} folds in {time.perf_counter() - t0:.0f} s")

    t1 = time.perf_counter()
    result = run_protocol(corpus, models, plan, cfg.protocol(), pcfg)
    result.write(out, cfg.stamp())
    cells = result.cells()
    for src in cfg.protocol().sources:
        plot_curves(cells, src.label, out / f"curve_{src.label}.svg")
    cm = row_normalized(result.confusions[("nrfar", "white", "clean")])
    (out / "clean_confusion.json").write_text(json.dumps(cm.tolist(), indent=2) + "\n")
    print(f"sweep in {time.perf_counter() - t1:.0f} s")
    for c in sorted(cells, key=lambda c: (c["method"], c["source"])):
        print(f"{c['method']:>18} {c['source']:>8} {c['snr']:>6}  {c['mean']:.4f} ± {c['std']:.4f}")


if __name__ == "__main__":
    main()
