import json

import pytest

from fundeco.config import SimConfig, from_dict, load_config
from fundeco.strategies import ConfigError


def test_defaults_round_trip():
    cfg = SimConfig()
    assert from_dict(cfg.to_dict()) == cfg
    assert from_dict({}) == cfg


def test_unknown_key_names_path():
    with pytest.raises(ConfigError) as e:
        from_dict({"market": {"leverag": 2}})
    assert "market.leverag" in str(e.value)


def test_type_errors_name_path():
    with pytest.raises(ConfigError) as e:
        from_dict({"run": {"t_max_days": 1.5}})
    assert "run.t_max_days" in str(e.value)
    with pytest.raises(ConfigError):
        from_dict({"flows": {"enabled": 1}})


def test_scalar_aggression_applies_to_all_styles():
    cfg = from_dict({"market": {"aggression": 2}})
    a = cfg.market.aggression
    assert (a.nt, a.vi, a.tf) == (2.0, 2.0, 2.0)


def test_validation():
    with pytest.raises(ConfigError):
        from_dict({"population": {"initial_shares": [0.5, 0.5, 0.1]}})
    with pytest.raises(ConfigError):
        from_dict({"population": {"discount_rate_range": [0.01, 0.02]}, "processes": {"dividend": {"growth_annual": 0.03}}})


def test_with_updates_merges_nested():
    cfg = SimConfig().with_updates(processes={"ou": {"theta": 0.2}}, run={"master_seed": 2**62})
    assert cfg.processes.ou.theta == 0.2
    assert cfg.processes.ou.sigma == SimConfig().processes.ou.sigma
    assert cfg.run.master_seed == 2**62


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"run": {"t_max_days": 10}}))
    assert load_config(p).run.t_max_days == 10
    assert load_config(None) == SimConfig()
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
