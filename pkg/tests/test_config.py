import json
from dataclasses import replace
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metashield import config as config_mod
from metashield.config import ENV_VAR, ToolkitConfig, dumps, from_dict, load, resolve, save, to_dict
from metashield.coupling import Arrangement
from metashield.device import EnclosureKind
from metashield.errors import ConfigError, InputError


class TestRoundTrip:
    def test_defaults(self):
        assert from_dict(to_dict(ToolkitConfig())) == ToolkitConfig()

    def test_byte_identical(self, tmp_path):
        save(ToolkitConfig(), tmp_path / "a.json")
        save(load(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    @given(st.integers(0, 2**63), st.floats(0.01, 5.0), st.sampled_from(list(Arrangement)))
    def test_edited_values_survive(self, seed, spacing_mm, arrangement):
        raw = to_dict(ToolkitConfig())
        raw["seeds"]["root"] = seed
        raw["array"]["spacing_mm"] = spacing_mm
        raw["array"]["arrangement"] = arrangement.value
        cfg = from_dict(raw)
        assert cfg.root_seed == seed and cfg.array.arrangement is arrangement
        assert cfg.array.spacing == pytest.approx(spacing_mm * 1e-3, rel=1e-15)
        assert from_dict(json.loads(dumps(cfg))) == cfg

    def test_shipped_default_file(self):
        text = resources.files("metashield").joinpath("data/default_config.json").read_text()
        assert text == dumps(ToolkitConfig())

    def test_keys_carry_units(self):
        raw = to_dict(ToolkitConfig())
        assert raw["presets"]["mobile"]["length_mm"] == pytest.approx(40.0)
        assert raw["array"]["units"][1]["h_mm"] == pytest.approx(3.2)
        assert raw["aadm"]["L_coiled_mm"] == pytest.approx(28.5)


class TestStrictParsing:
    def test_partial_config_fills_defaults(self):
        cfg = from_dict({"seeds": {"root": 7}})
        assert cfg == replace(ToolkitConfig(), root_seed=7)

    @pytest.mark.parametrize(
        "raw",
        [
            {"bogus": {}},
            {"coupling": {"alpha": 1.0}},
            {"presets": {"tablet": {}}},
            {"presets": {"mobile": {"wall_cm": 1.0}}},
            {"array": {"units": [{"r_mm": 1.5}]}},
            {"array": {"units": []}},
            {"array": {"spacing_mm": -1.0}},
            {"array": {"arrangement": "spiral"}},
            {"seeds": {"root": -1}},
            {"seeds": {"root": 1.5}},
            {"seeds": {"other": 1}},
            {"schema_version": 2},
            {"air": {"sound_speed_m_per_s": "fast"}},
            {"air": {"sound_speed_m_per_s": 0.0}},
            [],
        ],
    )
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            from_dict(raw)

    def test_config_error_is_input_error(self):
        assert issubclass(ConfigError, InputError)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError):
            load(tmp_path / "c.json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load(tmp_path / "nope.json")


class TestResolve:
    def test_defaults_without_path(self, monkeypatch):
        monkeypatch.delenv(ENV_VAR, raising=False)
        assert resolve() == ToolkitConfig()

    def test_env_var(self, monkeypatch, tmp_path):
        path = tmp_path / "env.json"
        path.write_text(json.dumps({"seeds": {"root": 11}}))
        monkeypatch.setenv(ENV_VAR, str(path))
        assert resolve().root_seed == 11

    def test_explicit_path_wins(self, monkeypatch, tmp_path):
        (tmp_path / "env.json").write_text(json.dumps({"seeds": {"root": 11}}))
        (tmp_path / "arg.json").write_text(json.dumps({"seeds": {"root": 12}}))
        monkeypatch.setenv(ENV_VAR, str(tmp_path / "env.json"))
        assert resolve(tmp_path / "arg.json").root_seed == 12

    def test_preset_lookup(self):
        cfg = ToolkitConfig()
        assert cfg.preset("speaker").kind is EnclosureKind.SPEAKER
        assert config_mod.SCHEMA_VERSION == to_dict(cfg)["schema_version"]
