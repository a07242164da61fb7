"""Frames emitted per second of stream time for several buffer sizes on a burst-shaped stream.

    python3 scripts/frames_per_second.py --N 3192 5000 10000 15000 --out results
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from evpipe.bench import burst_stream, gesture_stream
from evpipe.representations import frames_per_second_trace


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, nargs="+", default=[3192, 5000, 10000, 15000])
    p.add_argument("--stream", choices=("burst", "gestures"), default="burst")
    p.add_argument("--display-rate", type=float, default=60.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    args = p.parse_args(argv)
    ev = burst_stream(seed=args.seed) if args.stream == "burst" else gesture_stream(600_000, seed=args.seed, gap_us=300_000)

    traces = {N: frames_per_second_trace(ev, N, display_rate_hz=args.display_rate) for N in args.N}
    n_sec = max(len(t.counts) for t in traces.values())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"frames_per_second_{args.stream}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["second_index"] + [f"N={N}" for N in args.N])
        for s in range(n_sec):
            w.writerow([s] + [int(traces[N].counts[s]) if s < len(traces[N].counts) else 0 for N in args.N])
    for N, tr in traces.items():
        over = int(tr.exceeds.sum())
        print(f"N={N:>6}: frames/s {tr.counts.tolist()}  ({over} s above {args.display_rate:g} Hz)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
