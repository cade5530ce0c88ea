"""Tests for settings loading and validation."""

import pytest

from sdnum.config import (
    ExperimentConfig,
    load_settings,
    parse_policy_name,
    resolve_config_path,
    save_settings,
)
from sdnum.errors import ConfigError

from conftest import small_config


def build(mode="pandemic", **overrides):
    return ExperimentConfig.from_dict(small_config(mode, **overrides))


class TestDefaults:
    def test_defaults_validate(self):
        config = load_settings()
        assert config.mode == "pandemic"
        assert config.policy_kind == "old_first"
        assert config.eval_horizon == config.horizon.T
        assert config.eval_gamma == config.horizon.gamma

    @pytest.mark.parametrize(
        "name,mode,sites",
        [("pandemic_table1", "pandemic", 5), ("wildfire_table2", "wildfire", 2),
         ("synthetic_log", "synthetic", 2)],
    )
    def test_shipped_scenarios(self, name, mode, sites):
        config = load_settings(name)
        assert config.mode == mode
        assert len(config.sites) == sites
        assert resolve_config_path(name).suffix == ".yaml"

    def test_integers_become_floats(self):
        assert load_settings("pandemic_table1").horizon.z == [6.0]


class TestStrictLoading:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key 'bogus'"):
            build(bogus=1)

    def test_unknown_nested_key(self):
        data = small_config()
        data["horizon"]["bogus"] = 1
        with pytest.raises(ConfigError, match="unknown key 'horizon.bogus'"):
            ExperimentConfig.from_dict(data)

    def test_unknown_site_parameter(self):
        data = small_config()
        data["sites"][0]["params"]["colour"] = "red"
        with pytest.raises(ConfigError, match=r"sites\[0\]\.params\.colour"):
            ExperimentConfig.from_dict(data)

    @pytest.mark.parametrize(
        "overrides,path",
        [
            ({"evaluation": {"replicas": 0}}, "evaluation.replicas"),
            ({"mode": "flood"}, "mode"),
            ({"seed": "x"}, "seed"),
            ({"seed": True}, "seed"),
            ({"schema_version": 2}, "schema_version"),
            ({"workers": 0}, "workers"),
            ({"market": {"tol": 0.0}}, "market.tol"),
            ({"policy": {"kind": "rollout:bogus"}}, "policy.kind"),
            ({"policy": {"kind": "greedy"}}, "policy.kind"),
            ({"compare": {"policies": ["none", "fastest"]}}, "compare.policies[1]"),
        ],
    )
    def test_invalid_values_name_their_key(self, overrides, path):
        with pytest.raises(ConfigError, match=path.replace("[", r"\[").replace("]", r"\]")):
            build(**overrides)

    def test_tau_above_horizon(self):
        data = small_config()
        data["horizon"]["tau"] = 5
        with pytest.raises(ConfigError, match="horizon.tau"):
            ExperimentConfig.from_dict(data)

    def test_gamma_must_be_a_number(self):
        data = small_config()
        data["horizon"]["gamma"] = True
        with pytest.raises(ConfigError, match="horizon.gamma"):
            ExperimentConfig.from_dict(data)

    def test_simulated_sites_use_one_resource(self):
        data = small_config()
        data["horizon"]["z"] = [2.0, 2.0]
        with pytest.raises(ConfigError, match="horizon.z"):
            ExperimentConfig.from_dict(data)

    def test_site_kind_must_fit_mode(self):
        data = small_config("synthetic")
        data["sites"][0]["kind"] = "pandemic"
        with pytest.raises(ConfigError, match=r"sites\[0\]\.kind"):
            ExperimentConfig.from_dict(data)

    def test_log_weights_match_resources(self):
        data = small_config("synthetic")
        data["horizon"]["z"] = [1.0, 1.0]
        data["sites"][0]["params"]["c"] = [1.0, 2.0, 3.0]
        with pytest.raises(ConfigError, match=r"sites\[0\]\.params\.c"):
            ExperimentConfig.from_dict(data)

    def test_site_names_unique(self):
        data = small_config()
        data["sites"][1]["name"] = "loc1"
        with pytest.raises(ConfigError, match="unique"):
            ExperimentConfig.from_dict(data)


class TestFiles:
    def test_manifest_is_a_config(self):
        manifest = {
            "command": "run",
            "seed": 11,
            "arguments": {},
            "versions": {"sdnum": "1.0.0"},
            "config": small_config(),
        }
        assert ExperimentConfig.from_dict(manifest).seed == 11

    def test_save_and_load(self, tmp_path):
        config = build()
        path = tmp_path / "nested" / "saved.yaml"
        assert save_settings(config, path)
        assert load_settings(path).to_dict() == config.to_dict()

    def test_save_failure_returns_false(self, tmp_path):
        assert save_settings(build(), tmp_path) is False

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_settings(tmp_path / "absent.yaml")

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("horizon: [\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_settings(path)


def test_parse_policy_name():
    assert parse_policy_name("rollout:old_first") == ("rollout", "old_first")
    assert parse_policy_name("rollout") == ("rollout", "none")
    assert parse_policy_name("random") == ("random", None)
