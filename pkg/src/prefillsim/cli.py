"""simctl: command-line front door for runs, sweeps, workload export, traces."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .config import ConfigError, SimConfig, load_config
from .experiment import DEFAULT_CAP_GRID, run_once, run_sweep, sweep_table
from .metrics import records_to_csv, report_to_json
from .router import ServingMode
from . import workload as wl


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _apply_overrides(config: SimConfig, args) -> SimConfig:
    run = config.run
    if args.mode is not None:
        run = dataclasses.replace(run, mode=args.mode)
    if args.seed is not None:
        run = dataclasses.replace(run, seed=args.seed)
    return dataclasses.replace(config, run=run)


def _load_sessions(args):
    if getattr(args, "workload", None):
        return wl.import_sessions(Path(args.workload).read_text())
    return None


def cmd_run(args, record_trace: bool = False) -> int:
    config = _apply_overrides(load_config(args.config), args)
    if config.run.mode is None:
        print("error: missing required field [run].mode (or --mode)", file=sys.stderr)
        return 2
    ServingMode(config.run.mode)  # validate early
    result, report = run_once(config, sessions=_load_sessions(args),
                              record_trace=record_trace)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "report.json", report_to_json(report) + "\n")
    _atomic_write(out_dir / "requests.csv", records_to_csv(result))
    if record_trace:
        _atomic_write(out_dir / "trace.txt", "\n".join(result.trace) + "\n")
    print(
        f"mode={config.run.mode} seed={config.run.seed} "
        f"requests={report['request_count']} failures={report['failure_count']} "
        f"throughput={report['throughput_tok_per_s']:.1f} tok/s "
        f"hit_ratio={report['prefix_hit_ratio']:.3f}"
    )
    if result.failure_count > 0 and not args.allow_failures:
        print(f"error: {result.failure_count} request(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_trace(args) -> int:
    return cmd_run(args, record_trace=True)


def cmd_export_workload(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    workload = dataclasses.replace(config.workload, seed=config.run.seed)
    sessions = wl.generate(workload)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write(out, wl.export_sessions(sessions) + "\n")
    print(f"exported {len(sessions)} sessions to {out}")
    return 0


def cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    values = [float(v) for v in args.values.split(",")]
    modes = args.modes.split(",")
    for mode in modes:
        ServingMode(mode)
    cap_grid = (
        tuple(int(c) for c in args.cap_grid.split(","))
        if args.cap_grid
        else DEFAULT_CAP_GRID
    )
    cells = run_sweep(
        config,
        axis=args.axis,
        values=values,
        modes=modes,
        auto_concurrency=args.auto_concurrency,
        cap_grid=cap_grid,
        parallel=not args.serial,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "sweep.csv", sweep_table(cells))
    for cell in cells:
        name = f"cell_{cell.axis}_{cell.value:g}_{cell.mode}.json"
        _atomic_write(out_dir / name, report_to_json(cell.report) + "\n")
    total_failures = sum(c.report["failure_count"] for c in cells)
    print(sweep_table(cells), end="")
    if total_failures and not args.allow_failures:
        print(f"error: {total_failures} request(s) failed across cells",
              file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simctl",
        description="Deterministic simulator of multi-model disaggregated "
                    "LLM serving with shared-prefill KV reuse.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, workload_flag: bool = True):
        p.add_argument("config", help="TOML or JSON config file")
        p.add_argument("--mode", choices=["baseline", "prefillshare"])
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default="results")
        p.add_argument("--allow-failures", action="store_true")
        if workload_flag:
            p.add_argument("--workload", help="exported workload trace to replay")

    p_run = sub.add_parser("run", help="execute one simulation")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_trace = sub.add_parser("trace", help="run and write the event trace")
    common(p_trace)
    p_trace.set_defaults(func=cmd_trace)

    p_export = sub.add_parser("export-workload",
                              help="generate and export a workload trace")
    p_export.add_argument("config")
    p_export.add_argument("--mode", choices=["baseline", "prefillshare"])
    p_export.add_argument("--seed", type=int)
    p_export.add_argument("--out", default="workload.json")
    p_export.set_defaults(func=cmd_export_workload)

    p_sweep = sub.add_parser("sweep", help="run a (value x mode) grid")
    common(p_sweep, workload_flag=False)
    p_sweep.add_argument("--axis", required=True,
                         choices=["arrival_rate", "max_concurrent_sessions"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--modes", default="baseline,prefillshare")
    p_sweep.add_argument("--auto-concurrency", action="store_true",
                         help="pick the throughput-maximizing concurrency cap "
                              "per cell from a secondary grid")
    p_sweep.add_argument("--cap-grid",
                         help="comma-separated caps searched by --auto-concurrency")
    p_sweep.add_argument("--serial", action="store_true",
                         help="disable parallel cell execution")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
