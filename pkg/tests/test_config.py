import json

import pytest
import yaml

from webrecall.config import RunConfig, builtin_path, config_from_mapping, load_config, manifest
from webrecall.errors import ConfigError
from webrecall.oracle.remote import RemoteOracle
from webrecall.oracle.scripted import ScriptedOracle
from webrecall.policies import RandomWalkPolicy, ScriptedPolicy


def test_defaults_build_the_bundled_benchmark():
    cfg = RunConfig()
    world = cfg.load_world()
    assert len(world.tasks) == 40
    assert isinstance(cfg.make_oracle(), ScriptedOracle)
    assert isinstance(cfg.make_policy(), ScriptedPolicy)
    opts = cfg.runtime_options()
    assert (opts.horizon, opts.k, opts.rounds, opts.limits.f_mode) == (30, 1, 5, "standard")
    assert cfg.make_memory().min_similarity == 0.30


@pytest.mark.parametrize(
    "changes",
    [
        {"k": 0},
        {"dedup_threshold": 1.5},
        {"capacity": 2.5},
        {"rounds": True},
        {"heuristic_weight": "big"},
        {"f_mode": "greedy"},
        {"eviction": "fifo"},
        {"policy": "human"},
        {"ablations": ("memory",)},
        {"oracle": {"mode": "scripted"}},
        {"oracle": {"mode": "scripted", "path": "missing.json"}},
        {"oracle": {"mode": "remote"}},
        {"oracle": {"mode": "psychic"}},
        {"policy": "remote"},
        {"world_path": "nowhere.json"},
    ],
)
def test_invalid_values_are_config_errors(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_remote_settings_build_remote_handles():
    cfg = RunConfig(oracle={"mode": "remote", "endpoint": "http://o.test"}, policy="random", seed=4)
    assert isinstance(cfg.make_oracle(), RemoteOracle)
    assert cfg.make_policy() == RandomWalkPolicy(4)


def test_yaml_and_json_files_load_to_the_same_config(tmp_path):
    data = {"k": 3, "seed": 7, "ablations": ["navigation"], "world_path": "builtin:cms-mini",
            "oracle": {"mode": "scripted", "path": "builtin:cms-mini"}}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(data))
    (tmp_path / "c.json").write_text(json.dumps(data))
    a, b = load_config(tmp_path / "c.yaml"), load_config(tmp_path / "c.json")
    assert a == b and a.k == 3 and a.ablations == ("navigation",)
    assert a.config_hash() == b.config_hash()


def test_relative_paths_resolve_against_the_config_file(tmp_path):
    sub = tmp_path / "conf"
    sub.mkdir()
    (sub / "w.json").write_bytes(builtin_path("worlds", "cms-mini").read_bytes())
    (sub / "c.yaml").write_text("world_path: w.json\n")
    assert load_config(sub / "c.yaml").load_world().world_id == RunConfig(world_path="builtin:cms-mini").load_world().world_id


def test_file_level_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "list.yaml").write_text("- 1\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert load_config(tmp_path / "empty.yaml") == RunConfig()


def test_unknown_and_malformed_keys_are_rejected():
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        config_from_mapping({"topk": 3})
    with pytest.raises(ConfigError):
        config_from_mapping({"ablations": "navigation"})
    with pytest.raises(ConfigError):
        config_from_mapping({"oracle": "scripted"})


def test_overrides_ignore_none_and_revalidate():
    cfg = RunConfig()
    assert cfg.with_overrides(seed=None) == cfg
    assert cfg.with_overrides(seed=9).seed == 9
    with pytest.raises(ConfigError):
        cfg.with_overrides(k=-1)
    with pytest.raises(ConfigError):
        cfg.with_overrides(nonsense=1)


def test_equal_configs_give_equal_manifests():
    world = RunConfig().load_world()
    one = manifest(RunConfig(seed=3), "bench", world)
    assert one == manifest(RunConfig(seed=3), "bench", world)
    assert one["seed"] == 3 and one["world_id"] == world.world_id
    assert one["config_hash"] != manifest(RunConfig(seed=4), "bench", world)["config_hash"]
    assert RunConfig(ablations=("reflection", "navigation")).ablations == ("navigation", "reflection")
