#!/usr/bin/env python3
"""Plot sweep.csv files produced by the sweep scripts.

For a concurrency-cap sweep: hit ratio and throughput vs cap, per mode.
For an arrival-rate sweep: throughput and p95 E2E vs rate, per mode.

Usage: python scripts/plot_sweeps.py results/capacity/sweep.csv out.png
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path: Path):
    rows = list(csv.DictReader(path.open()))
    if not rows:
        sys.exit(f"no rows in {path}")
    series = defaultdict(list)
    for row in rows:
        series[row["mode"]].append(row)
    for mode in series:
        series[mode].sort(key=lambda r: float(r["value"]))
    return rows[0]["axis"], series


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    axis, series = load(src)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 8), sharex=True)
    for mode, rows in sorted(series.items()):
        xs = [float(r["value"]) for r in rows]
        top.plot(xs, [float(r["throughput_tok_per_s"]) for r in rows],
                 marker="o", label=mode)
        if axis == "max_concurrent_sessions":
            bottom.plot(xs, [100 * float(r["prefix_hit_ratio"]) for r in rows],
                        marker="o", label=mode)
        else:
            bottom.plot(xs, [float(r["p95_e2e_us"]) / 1e6 for r in rows if r["p95_e2e_us"]],
                        marker="o", label=mode)
    top.set_ylabel("throughput (tok/s)")
    top.legend()
    top.grid(True, alpha=0.3)
    if axis == "max_concurrent_sessions":
        bottom.set_ylabel("prefix-cache hit ratio (%)")
        bottom.set_xlabel("concurrency cap (sessions)")
    else:
        bottom.set_ylabel("p95 E2E latency (s)")
        bottom.set_xlabel("arrival rate (sessions/s)")
        bottom.set_yscale("log")
    bottom.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    print(f"wrote {dst}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
