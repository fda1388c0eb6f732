"""Metric aggregation: percentile definition, throughput window, schemas."""

import json
import math

import pytest
from hypothesis import given, strategies as st

from prefillsim.cluster import RequestRecord, RunResult
from prefillsim.metrics import (
    CSV_HEADER,
    SCHEMA_VERSION,
    build_report,
    percentile,
    records_to_csv,
    report_to_json,
    throughput_tok_per_s,
)


def _result(records=(), completions=(), end=1_000_000):
    return RunResult(
        end_time_us=end,
        records=list(records),
        token_completions=list(completions),
        prefill_pool_stats=[],
        peak_footprint_tokens={},
        total_matched_tokens=0,
        total_lookup_tokens=0,
        eviction_count=0,
        failure_count=0,
        staging_handoff_count=0,
    )


def test_percentile_nearest_rank_hand_cases():
    assert percentile([1, 2, 3, 4, 5], 50) == 3
    assert percentile([1, 2, 3, 4, 5], 95) == 5
    assert percentile([1, 2, 3, 4], 50) == 2
    assert percentile([10], 99) == 10
    assert percentile([7, 3], 0) == 3


def test_percentile_empty_raises():
    with pytest.raises(ValueError):
        percentile([], 50)


@given(
    values=st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=200),
    p=st.floats(0.0, 100.0, allow_nan=False),
)
def test_percentile_is_smallest_value_covering_p(values, p):
    got = percentile(values, p)
    ordered = sorted(values)
    # independent definition: smallest element whose cumulative share of the
    # sample is >= p%
    want = next(
        (v for i, v in enumerate(ordered) if (i + 1) * 100.0 >= p * len(ordered)),
        ordered[0],
    )
    assert got == want
    assert got in values


def test_throughput_counts_post_warmup_window_only():
    completions = [(50_000, 10), (100_000, 10), (900_000, 30)]
    result = _result(completions=completions, end=1_000_000)
    # warmup 0.1 -> window [100ms-equivalent 100_000 us, 1_000_000 us]
    got = throughput_tok_per_s(result, warmup_fraction=0.1)
    assert got == (10 + 30) / 0.9


def test_throughput_empty_run_is_zero():
    assert throughput_tok_per_s(_result(end=0)) == 0.0


def _record(i, ttft=100, e2e=500, out=4, failed=False):
    return RequestRecord(request_id=i, session_id=i, model_id="model_a",
                         issue_time_us=0, ttft_us=ttft, e2e_us=e2e,
                         out_tokens=out, failed=failed)


def test_report_structure_and_aggregates():
    records = [_record(0, ttft=100, e2e=400), _record(1, ttft=300, e2e=800),
               _record(2, ttft=None, e2e=None, failed=True)]
    result = _result(records=records, completions=[(500_000, 8)])
    report = build_report(result, {"run": {"seed": 0}})
    assert report["schema_version"] == SCHEMA_VERSION
    assert report["config"] == {"run": {"seed": 0}}
    assert report["request_count"] == 3
    assert report["completed_count"] == 2
    assert report["p95_e2e_us"] == 800
    assert report["mean_ttft_us"] == 200
    assert report["p95_ttft_us"] == 300
    assert "hit_ratio_definition" in report["metadata"]
    assert "throughput_definition" in report["metadata"]


def test_report_json_is_sorted_and_round_trips():
    report = build_report(_result(), {"z": 1, "a": 2})
    text = report_to_json(report)
    assert json.loads(text) == report
    assert text == report_to_json(json.loads(text))
    keys = list(json.loads(text))
    assert keys == sorted(keys)


def test_csv_schema():
    records = [_record(0), _record(1, ttft=None, e2e=None, out=0, failed=True)]
    text = records_to_csv(_result(records=records))
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[0] == "request_id,session_id,model_id,ttft_us,e2e_us,out_tokens"
    assert lines[1] == "0,0,model_a,100,500,4"
    # incomplete requests leave latency fields empty, never fabricated
    assert lines[2] == "1,1,model_a,,,0"
    assert text.endswith("\n")


@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=100))
def test_p95_bounds(values):
    p95 = percentile(values, 95)
    assert min(values) <= p95 <= max(values)
    # at least 95% of the sample is <= the reported p95
    assert sum(v <= p95 for v in values) >= math.ceil(0.95 * len(values))
