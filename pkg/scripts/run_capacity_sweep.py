#!/usr/bin/env python3
"""Sweep the concurrency cap under the reference config in both modes.

Reproduces the hit-ratio collapse of isolated caches and the saturation of
shared-prefill throughput. Writes sweep.csv plus per-cell reports.

Usage: python scripts/run_capacity_sweep.py [--out-dir results/capacity]
"""

import argparse
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from prefillsim.cli import main  # noqa: E402

CAPS = "10,20,40,80,120,160"


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/capacity")
    parser.add_argument("--config", default=str(REPO / "configs" / "reference_react.toml"))
    parser.add_argument("--caps", default=CAPS)
    parser.add_argument("--seed", type=int)
    args = parser.parse_args()
    argv = [
        "sweep", args.config,
        "--axis", "max_concurrent_sessions",
        "--values", args.caps,
        "--modes", "baseline,prefillshare",
        "--out-dir", args.out_dir,
    ]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    return main(argv)


if __name__ == "__main__":
    sys.exit(run())
