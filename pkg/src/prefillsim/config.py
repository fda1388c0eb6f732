"""Run configuration: TOML or JSON files with [fleet], [cost], [workload],
[cache], [run] sections. Unknown or ill-typed fields produce diagnostics
naming the field; every resolved value is echoed verbatim into result files.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib

from .costs import CostParams
from .workload import WorkloadConfig

# 0 means unbounded for capacity/concurrency knobs.
UNBOUNDED_SENTINEL = 0


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class FleetConfig:
    models: tuple[str, ...] = ("model_a", "model_b", "model_c", "model_d")
    max_batch: int = 64


@dataclass(frozen=True)
class CacheConfig:
    block_size: int = 16
    prefill_capacity_blocks: int = 7_500
    decode_capacity_blocks: int = 4_500


@dataclass(frozen=True)
class RunSettings:
    mode: str | None = None
    seed: int = 0
    max_concurrent_sessions: int = UNBOUNDED_SENTINEL
    warmup_fraction: float = 0.1
    max_sim_time_s: int = 100_000


@dataclass(frozen=True)
class SimConfig:
    fleet: FleetConfig = field(default_factory=FleetConfig)
    cost: CostParams = field(default_factory=CostParams)
    cache: CacheConfig = field(default_factory=CacheConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        out["workload"]["agents"] = (
            None
            if self.workload.agents is None
            else [list(a) for a in self.workload.agents]
        )
        out["fleet"]["models"] = list(self.fleet.models)
        return out


def _build_section(cls, section: str, data: dict, **fixups):
    field_names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in field_names:
            raise ConfigError(f"unknown field [{section}].{key}")
    try:
        return cls(**{**data, **fixups})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def config_from_dict(raw: dict) -> SimConfig:
    known = {"fleet", "cost", "workload", "cache", "run"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown section [{key}]")
    fleet_raw = dict(raw.get("fleet", {}))
    if "models" in fleet_raw:
        fleet_raw["models"] = tuple(fleet_raw["models"])
    workload_raw = dict(raw.get("workload", {}))
    if workload_raw.get("agents") is not None:
        workload_raw["agents"] = tuple(
            (str(m), int(e), int(o)) for m, e, o in workload_raw["agents"]
        )
    return SimConfig(
        fleet=_build_section(FleetConfig, "fleet", fleet_raw),
        cost=_build_section(CostParams, "cost", dict(raw.get("cost", {}))),
        cache=_build_section(CacheConfig, "cache", dict(raw.get("cache", {}))),
        workload=_build_section(WorkloadConfig, "workload", workload_raw),
        run=_build_section(RunSettings, "run", dict(raw.get("run", {}))),
    )


def load_config(path: str | Path) -> SimConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return config_from_dict(raw)
