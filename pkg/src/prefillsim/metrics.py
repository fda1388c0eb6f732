"""Metric aggregation: TTFT, ITL, p95 E2E, windowed throughput, prefix-cache
hit ratio, and peak KV footprint, plus the CSV/JSON output schemas.

Hit ratio is token-weighted (cumulative matched tokens / cumulative lookup
tokens over prefill lookups) and throughput counts generated output tokens
only; both accounting choices are recorded in the report metadata.
"""

from __future__ import annotations

import json
import math
from typing import Sequence

from .cluster import RunResult

SCHEMA_VERSION = 1

CSV_HEADER = "request_id,session_id,model_id,ttft_us,e2e_us,out_tokens"


def percentile(values: Sequence, p: float) -> float:
    """Nearest-rank percentile: sort ascending, take element ceil(p/100*n)-1."""
    if not values:
        raise ValueError("percentile of empty input")
    ordered = sorted(values)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[max(rank, 1) - 1]


def throughput_tok_per_s(result: RunResult, warmup_fraction: float = 0.1) -> float:
    """Generated tokens completed within [warmup*T_end, T_end] over the
    window length."""
    t_end = result.end_time_us
    if t_end <= 0:
        return 0.0
    window_start = warmup_fraction * t_end
    tokens = sum(n for t, n in result.token_completions if t >= window_start)
    window_s = (t_end - window_start) / 1_000_000
    if window_s <= 0:
        return 0.0
    return tokens / window_s


def build_report(result: RunResult, config_echo: dict,
                 warmup_fraction: float = 0.1) -> dict:
    """Aggregate a run into the versioned report structure. Every aggregate
    is recomputable from the per-request records and pool stats."""
    completed = [r for r in result.records if r.e2e_us is not None and not r.failed]
    ttfts = [r.ttft_us for r in completed]
    e2es = [r.e2e_us for r in completed]
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config_echo,
        "metadata": {
            "hit_ratio_definition": "cumulative matched_tokens / lookup_tokens over prefill lookups",
            "throughput_definition": "generated output tokens completed in the post-warmup window",
            "warmup_fraction": warmup_fraction,
        },
        "end_time_us": result.end_time_us,
        "request_count": len(result.records),
        "completed_count": len(completed),
        "failure_count": result.failure_count,
        "staging_handoff_count": result.staging_handoff_count,
        "p95_e2e_us": percentile(e2es, 95) if e2es else None,
        "mean_ttft_us": sum(ttfts) / len(ttfts) if ttfts else None,
        "p95_ttft_us": percentile(ttfts, 95) if ttfts else None,
        "throughput_tok_per_s": throughput_tok_per_s(result, warmup_fraction),
        "prefix_hit_ratio": result.prefix_hit_ratio,
        "matched_tokens": result.total_matched_tokens,
        "lookup_tokens": result.total_lookup_tokens,
        "eviction_count": result.eviction_count,
        "peak_footprint_tokens": dict(sorted(result.peak_footprint_tokens.items())),
        "peak_footprint_total": sum(result.peak_footprint_tokens.values()),
    }
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1)


def records_to_csv(result: RunResult) -> str:
    lines = [CSV_HEADER]
    for r in result.records:
        ttft = "" if r.ttft_us is None else str(r.ttft_us)
        e2e = "" if r.e2e_us is None else str(r.e2e_us)
        lines.append(
            f"{r.request_id},{r.session_id},{r.model_id},{ttft},{e2e},{r.out_tokens}"
        )
    return "\n".join(lines) + "\n"
