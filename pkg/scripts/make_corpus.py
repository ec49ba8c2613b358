"""Write a seeded synthetic corpus (WAV + bout labels + JM events) and natural-noise clips."""

import argparse
from pathlib import Path

from nrfar.synth import make_corpus, write_noise_clips, write_recording


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="data/corpus")
    p.add_argument("--clips", default="data/natural")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--duration-s", type=float, default=4320.0)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()
    recs = make_corpus(args.n, args.duration_s, seed=args.seed)
    for r in recs:
        write_recording(args.out, r)
    clips = write_noise_clips(args.clips, seed=args.seed)
    hours = sum(r.duration_s for r in recs) / 3600
    print(f"{len(recs)} recordings ({hours:.1f} h) in {Path(args.out)}, {len(clips)} clips in {Path(args.clips)}")


if __name__ == "__main__":
    main()
