"""Accumulated-latency-vs-buffer-size sweeps for the flow, gesture and voxel processors.

Writes one CSV per algorithm (rows per R and N) into ``--out`` and prints the
best buffer size per rate.  Absolute numbers depend on the machine; the
curve shapes are the point.

    python3 scripts/latency_curves.py --algorithm flow --out results
"""

from __future__ import annotations

import argparse
from pathlib import Path

from evpipe.cli import main as evpipe_main

DEFAULT_GRIDS = {
    "flow": ([100, 500, 1000, 2000, 5000, 10000, 20000, 50000, 100000], [113_900, 365_600, 624_390]),
    "gesture": ([100, 500, 1000, 2000, 5000, 10000, 20000], [50_000, 113_900, 365_600]),
    "voxel": ([1000, 2000, 5000, 10000, 15000, 20000, 50000, 100000], [113_900, 365_600, 624_390]),
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--algorithm", choices=sorted(DEFAULT_GRIDS), default="flow")
    p.add_argument("--N", type=int, nargs="+")
    p.add_argument("--R", type=float, nargs="+")
    p.add_argument("--repetitions", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    args = p.parse_args(argv)
    N_grid, R_grid = DEFAULT_GRIDS[args.algorithm]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return evpipe_main(
        [
            "--seed", str(args.seed),
            "bench", "--algorithm", args.algorithm,
            "--N", *map(str, args.N or N_grid),
            "--R", *map(str, args.R or R_grid),
            "--repetitions", str(args.repetitions),
            "-o", str(out / f"latency_{args.algorithm}.csv"),
        ]
    )


if __name__ == "__main__":
    raise SystemExit(main())
