"""simctl surface: subcommands, outputs, exit codes, replayable workloads."""

import json
import subprocess
import sys

import pytest

from prefillsim.cli import main

FAST_TOML = """
[workload]
duration_s = 3.0
arrival_rate_per_s = 1.0

[run]
seed = 3
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.toml"
    path.write_text(FAST_TOML)
    return str(path)


def test_run_writes_report_and_csv(fast_config, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["run", fast_config, "--mode", "prefillshare", "--out-dir", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["config"]["run"]["mode"] == "prefillshare"
    assert report["config"]["run"]["seed"] == 3
    assert report["failure_count"] == 0
    lines = (out / "requests.csv").read_text().splitlines()
    assert lines[0] == "request_id,session_id,model_id,ttft_us,e2e_us,out_tokens"
    assert len(lines) - 1 == report["request_count"]
    summary = capsys.readouterr().out
    assert "mode=prefillshare" in summary and "seed=3" in summary


def test_missing_mode_is_exit_2(fast_config, tmp_path, capsys):
    rc = main(["run", fast_config, "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    assert "[run].mode" in capsys.readouterr().err


def test_config_error_is_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[cache]\nblok_size = 8\n")
    rc = main(["run", str(bad), "--mode", "baseline",
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2
    assert "blok_size" in capsys.readouterr().err


def test_seed_flag_overrides_config(fast_config, tmp_path):
    out = tmp_path / "o"
    main(["run", fast_config, "--mode", "baseline", "--seed", "11",
          "--out-dir", str(out)])
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["run"]["seed"] == 11


def test_trace_writes_event_log(fast_config, tmp_path):
    out = tmp_path / "o"
    rc = main(["trace", fast_config, "--mode", "prefillshare", "--out-dir", str(out)])
    assert rc == 0
    lines = (out / "trace.txt").read_text().splitlines()
    assert lines
    kinds = {line.split()[2] for line in lines}
    assert {"SessionArrival", "PrefillStart", "PrefillComplete",
            "HandoffComplete", "DecodeStep", "RequestComplete",
            "SessionComplete"} <= kinds


def test_export_and_replay_workload(fast_config, tmp_path, capsys):
    workload = tmp_path / "wl.json"
    rc = main(["export-workload", fast_config, "--out", str(workload)])
    assert rc == 0
    payload = json.loads(workload.read_text())
    assert payload["schema_version"] == 1
    assert payload["sessions"]

    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        rc = main(["run", fast_config, "--mode", "prefillshare",
                   "--workload", str(workload), "--out-dir", str(out)])
        assert rc == 0
    assert (out_a / "report.json").read_text() == (out_b / "report.json").read_text()


def test_sweep_writes_table_and_cells(fast_config, tmp_path):
    out = tmp_path / "sweep"
    rc = main(["sweep", fast_config, "--axis", "max_concurrent_sessions",
               "--values", "1,2", "--modes", "baseline,prefillshare",
               "--serial", "--out-dir", str(out)])
    assert rc == 0
    table = (out / "sweep.csv").read_text().splitlines()
    assert table[0].startswith("axis,value,mode,cap,throughput_tok_per_s")
    assert len(table) == 1 + 4  # 2 values x 2 modes
    for value in ("1", "2"):
        for mode in ("baseline", "prefillshare"):
            cell = out / f"cell_max_concurrent_sessions_{value}_{mode}.json"
            assert json.loads(cell.read_text())["config"]["run"]["mode"] == mode


def test_entry_point_runs_as_subprocess(fast_config, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "prefillsim.cli", "run", fast_config,
         "--mode", "baseline", "--out-dir", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "mode=baseline" in proc.stdout


def test_unknown_axis_rejected(fast_config, tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", fast_config, "--axis", "bogus", "--values", "1",
              "--out-dir", str(tmp_path / "o")])
