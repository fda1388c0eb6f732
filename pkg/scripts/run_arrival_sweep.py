#!/usr/bin/env python3
"""Sweep the session arrival rate with auto-selected concurrency caps.

Each cell searches the secondary cap grid for the throughput-maximizing
concurrency limit, then the two serving modes are compared on throughput
and tail latency. Writes sweep.csv plus per-cell reports.

Usage: python scripts/run_arrival_sweep.py [--out-dir results/arrival]
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from prefillsim.cli import main  # noqa: E402

RATES = "0.5,1,2,4,8"


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/arrival")
    parser.add_argument("--config", default=str(REPO / "configs" / "fast_react.toml"))
    parser.add_argument("--rates", default=RATES)
    parser.add_argument("--seed", type=int)
    args = parser.parse_args()
    argv = [
        "sweep", args.config,
        "--axis", "arrival_rate",
        "--values", args.rates,
        "--modes", "baseline,prefillshare",
        "--auto-concurrency",
        "--out-dir", args.out_dir,
    ]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return main(argv)


if __name__ == "__main__":
    sys.exit(run())
