"""Config loading: TOML and JSON, field diagnostics, echo fidelity."""

import pytest

from prefillsim.config import (
    ConfigError,
    SimConfig,
    UNBOUNDED_SENTINEL,
    config_from_dict,
    load_config,
)


def test_defaults_construct():
    config = SimConfig()
    assert config.fleet.models == ("model_a", "model_b", "model_c", "model_d")
    assert config.run.mode is None
    assert config.run.max_concurrent_sessions == UNBOUNDED_SENTINEL


def test_load_reference_config(tmp_path):
    import pathlib
    ref = pathlib.Path(__file__).resolve().parent.parent / "configs" / "reference_react.toml"
    config = load_config(ref)
    assert config.workload.arrival_rate_per_s == 4.0
    assert config.cache.block_size == 16
    # the reference file restates every default verbatim
    assert config.cost == SimConfig().cost
    assert config.cache == SimConfig().cache


def test_unknown_section_named_in_error():
    with pytest.raises(ConfigError, match=r"unknown section \[wheels\]"):
        config_from_dict({"wheels": {}})


def test_unknown_field_named_in_error():
    with pytest.raises(ConfigError, match=r"unknown field \[cache\].blok_size"):
        config_from_dict({"cache": {"blok_size": 8}})


def test_invalid_value_names_section():
    with pytest.raises(ConfigError, match=r"invalid \[cost\] section"):
        config_from_dict({"cost": {"staging_penalty": 0}})


def test_toml_and_json_agree(tmp_path):
    toml_path = tmp_path / "c.toml"
    toml_path.write_text(
        '[run]\nseed = 9\nmode = "baseline"\n\n[cache]\nblock_size = 8\n'
    )
    json_path = tmp_path / "c.json"
    json_path.write_text(
        '{"run": {"seed": 9, "mode": "baseline"}, "cache": {"block_size": 8}}'
    )
    assert load_config(toml_path) == load_config(json_path)


def test_toml_syntax_error_has_location(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[run\nseed = 1\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_config(path)


def test_json_syntax_error_has_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"run": {,}}')
    with pytest.raises(ConfigError, match=r"bad\.json:1"):
        load_config(path)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/nope.toml")


def test_echo_round_trips_through_config_from_dict():
    config = config_from_dict(
        {
            "fleet": {"models": ["x", "y"], "max_batch": 8},
            "workload": {"agents": [["x", 4, 8], ["y", 4, 8]], "turns": 2},
            "run": {"mode": "prefillshare", "seed": 3},
        }
    )
    echoed = config.echo()
    assert config_from_dict(echoed) == config
    assert echoed["fleet"]["models"] == ["x", "y"]
    assert echoed["workload"]["agents"] == [["x", 4, 8], ["y", 4, 8]]
