"""Tests for configuration defaults, loading, merging and the shipped presets."""

import json
from pathlib import Path

import pytest

import pbo_config as config_lib
from core import ClipSynthSpec, InvalidInput, build_record
from energy import LayerProfile, energy_total
from lif import LifParams, lif_power_gain
from trainer import SyntheticTaskSpec, TrainConfig

ROOT = Path(__file__).resolve().parent.parent
PRESETS = ROOT / "presets"


class TestDefaults:
    def test_every_section_and_seed(self):
        config = config_lib.default_config()
        assert set(config) == set(config_lib.SECTIONS) | {"seed"}
        assert config["seed"] == config_lib.DEFAULT_SEED

    def test_default_copies_are_independent(self):
        config = config_lib.default_config()
        config["lif"]["tau"] = 0.1
        assert config_lib.default_config()["lif"]["tau"] == 0.7

    def test_sections_build_records(self):
        config = config_lib.default_config()
        build_record(LifParams, **config["lif"])
        build_record(ClipSynthSpec, **config["corpus"])
        build_record(SyntheticTaskSpec, **config["task"])
        build_record(TrainConfig, **config["train"])

    def test_get_section(self):
        assert config_lib.get_section("grid")["n_points"] == 512
        with pytest.raises(ValueError):
            config_lib.get_section("prompts")


class TestLoadConfig:
    def test_template_loads_without_descriptions(self):
        config = config_lib.load_config(ROOT / "config.template.json")
        assert "_comment" not in config
        assert "description" not in config["lif"]
        assert config["train"]["epochs"] == 30

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"agents": {}}))
        with pytest.raises(InvalidInput):
            config_lib.load_config(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(InvalidInput):
            config_lib.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInput):
            config_lib.load_config(tmp_path / "absent.json")

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(InvalidInput):
            config_lib.load_config(path)


class TestMergeAndSeed:
    def test_merge_is_per_section(self):
        base = config_lib.default_config()
        merged = config_lib.merge_config(base, {"train": {"epochs": 3}, "seed": 9})
        assert merged["train"]["epochs"] == 3
        assert merged["train"]["batch_size"] == base["train"]["batch_size"]
        assert merged["seed"] == 9
        assert base["train"]["epochs"] == 30

    def test_seed_precedence(self):
        assert config_lib.resolve_seed(5, {"seed": 7}) == 5
        assert config_lib.resolve_seed(None, {"seed": 7}) == 7
        assert config_lib.resolve_seed() == config_lib.DEFAULT_SEED


class TestPresets:
    @pytest.mark.parametrize("name", ["default.json", "dc_only.json", "mechanism.json", "energy_profile.json"])
    def test_presets_load(self, name):
        config = config_lib.merge_config(config_lib.default_config(),
                                         config_lib.load_config(PRESETS / name))
        build_record(ClipSynthSpec, **config["corpus"])
        build_record(SyntheticTaskSpec, **config["task"])

    def test_energy_preset_is_the_worked_example(self):
        section = config_lib.load_config(PRESETS / "energy_profile.json")["energy"]
        profiles = [LayerProfile(**layer) for layer in section["layers"]]
        assert energy_total(profiles, section["T"]).total_pj == pytest.approx(5320.0)

    def test_mechanism_preset_uses_slow_membrane(self):
        config = config_lib.load_config(PRESETS / "mechanism.json")
        assert 1.0 - config["train"]["tau"] == pytest.approx(0.7)
        assert config["lif"]["tau"] == config["train"]["tau"]
        for tone in config["task"]["class_tones"]:
            assert lif_power_gain(1.0 - config["train"]["tau"], tone) <= 0.1

    def test_training_defaults_to_fast_membrane(self):
        assert config_lib.DEFAULT_TRAIN["tau"] == 0.7
        assert TrainConfig().tau == 0.7
        assert config_lib.DEFAULT_TRAIN["mu_init"] == TrainConfig().mu_init
