"""Run configuration document: defaults, strict keys, overrides."""

import pytest

from hopgen.config import (ConfigError, RunConfig, apply_overrides, from_dict,
                           load)


class TestDefaults:
    def test_reference_settings(self):
        cfg = RunConfig()
        assert cfg.extraction.hops == 2
        assert cfg.extraction.top_b == 100
        assert cfg.flow.gamma == 0.5
        assert cfg.flow.aggregator == "max"
        assert cfg.generate.beam == 3

    def test_load_none_gives_defaults(self):
        assert load(None).to_dict() == RunConfig().to_dict()


class TestStrictness:
    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown config sections: nope"):
            from_dict({"nope": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys in train: lr"):
            from_dict({"train": {"lr": 0.1}})

    def test_parse_failure(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="parse failure"):
            load(str(p))

    def test_non_object_root_rejected(self, tmp_path):
        p = tmp_path / "arr.json"
        p.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            load(str(p))


class TestOverrides:
    def test_dotted_override(self):
        cfg = apply_overrides(RunConfig(), {"train.lr0": 0.01,
                                            "flow.gamma": 0.9})
        assert cfg.train.lr0 == 0.01
        assert cfg.flow.gamma == 0.9

    def test_none_skipped(self):
        cfg = apply_overrides(RunConfig(), {"train.lr0": None})
        assert cfg.train.lr0 == RunConfig().train.lr0

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            apply_overrides(RunConfig(), {"train.nope": 1})

    def test_file_values_then_flag_overrides(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text('{"train": {"lr0": 0.5, "seed": 3}}')
        cfg = apply_overrides(load(str(p)), {"train.lr0": 0.25})
        assert cfg.train.lr0 == 0.25
        assert cfg.train.seed == 3
