"""Kept-event fraction and gesture accuracy across filter strengths.

    python3 scripts/filter_vs_accuracy.py --per-class 20 --out results
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from evpipe.filtering import FilterConfig
from evpipe.hots import HotsConfig, accuracy_vs_filtering
from evpipe.ingest import synthesize_gesture_set


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--per-class", type=int, default=20, help="train and test recordings per class")
    p.add_argument("--refractory-us", type=int, nargs="+", default=[100, 300, 500, 1000, 5000, 20000])
    p.add_argument("--st-window-us", type=int, default=0, help="spatiotemporal window; 0 disables the stage")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    args = p.parse_args(argv)

    data = synthesize_gesture_set(2 * args.per_class, seed=args.seed)
    n_train = 4 * args.per_class
    levels = [None] + [
        FilterConfig(refractory_us=r, st_radius=1 if args.st_window_us else 0, st_window_us=args.st_window_us)
        for r in args.refractory_us
    ]
    rows = accuracy_vs_filtering((data[:n_train], data[n_train:]), levels, HotsConfig(), seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "filter_vs_accuracy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "refractory_us", "st_window_us", "kept_fraction", "accuracy"])
        for r in rows:
            w.writerow([r.level, r.refractory_us, r.st_window_us, f"{r.kept_fraction:.4f}", f"{r.accuracy:.4f}"])
            print(f"refractory {r.refractory_us:>6} us  kept {r.kept_fraction:6.1%}  accuracy {r.accuracy:6.1%}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
