"""Config file parsing, overrides, and validation guards."""

import pytest

from replyrank.config import (TrainConfig, config_from_dict, load_config)
from replyrank.errors import ConfigError


class TestFileParsing:
    def test_file_plus_overrides(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("""
            # comment line
            d = 16          # trailing comment
            lambda = 0.5
            N_LAYERS = 1
            use_speaker = false
        """)
        cfg = load_config(p, {"epochs": "3"})
        assert cfg.d == 16
        assert cfg.l2_lambda == 0.5
        assert cfg.n_layers == 1
        assert cfg.use_speaker is False
        assert cfg.epochs == 3

    def test_overrides_beat_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("d = 16\n")
        assert load_config(p, {"d": "32"}).d == 32

    def test_defaults_without_file(self):
        cfg = load_config()
        assert cfg.d == 64 and cfg.m == 4
        assert cfg.learning_rate == pytest.approx(1e-3)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("d 16\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(p)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("banana = 3\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(p)

    def test_bad_int(self):
        with pytest.raises(ConfigError, match="'d'"):
            load_config(None, {"d": "sixteen"})

    def test_bad_bool(self):
        with pytest.raises(ConfigError, match="boolean"):
            load_config(None, {"use_history": "maybe"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "nope.cfg")


class TestValidation:
    @pytest.mark.parametrize("bad", [
        {"m": "1"},
        {"d": "0"},
        {"dropout": "1.0"},
        {"dropout": "-0.1"},
        {"lambda": "-1"},
        {"comparison_variant": "fancy"},
        {"d": "10", "n_heads": "4"},
        {"min_count": "0"},
        {"epochs": "0"},
        {"emb_init_std": "0"},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            load_config(None, bad)

    def test_zero_layers_allowed(self):
        assert load_config(None, {"n_layers": "0"}).n_layers == 0

    def test_joint_len(self):
        cfg = TrainConfig(l_ctx=10, l_resp=4)
        assert cfg.joint_len == 15

    def test_dict_round_trip(self):
        cfg = load_config(None, {"d": "16", "use_comparison": "no",
                                 "comparison_variant": "no_gate"})
        back = config_from_dict(cfg.to_dict())
        assert back.to_dict() == cfg.to_dict()
