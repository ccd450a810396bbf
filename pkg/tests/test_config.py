"""Experiment configuration: TOML loading, validation and flag overrides."""

import pytest

from raed.config.schema import (
    ExperimentConfig,
    FrontendConfig,
    RelaxationConfig,
    TrainConfig,
    TransformerConfig,
    load_config,
    override,
    parse_config,
)
from raed.config.settings import Settings
from raed.utils.errors import ConfigError
from raed.utils.messages import describe, init_messages


class TestExperimentConfig:
    def test_defaults(self):
        config = load_config(None)
        assert config.relaxation is None
        assert config.model.arch == "transformer"
        assert config.fusion.lm_weight == pytest.approx(0.9)
        assert config.fusion.eos_factor is None
        assert config.train.grad_clip == pytest.approx(5.0)
        assert config.grid.gammas == [0.0, 0.2, 0.35]

    def test_toml_sections(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text(
            "[relaxation]\ngamma = 0.35\n\n"
            "[transformer]\nd_model = 32\nheads = 4\n\n"
            "[train]\nepochs = 3\nspec_augment = true\n",
            encoding="utf-8",
        )
        config = load_config(path)
        assert config.relaxation.gamma == pytest.approx(0.35)
        assert config.model.transformer.d_model == 32
        assert config.train.epochs == 3 and config.train.spec_augment

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"train": {"epoch": 3}})
        assert "train.epoch" in info.value.detail

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text("[train\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.toml")

    def test_schedule_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            parse_config({"train": {"warmup_frac": 0.2, "hold_frac": 0.4, "decay_frac": 0.5}})

    @pytest.mark.parametrize("gamma", [-0.1, 1.1])
    def test_gamma_range(self, gamma):
        with pytest.raises(ConfigError):
            parse_config({"relaxation": {"gamma": gamma}})

    def test_heads_divide_model_width(self):
        with pytest.raises(ConfigError):
            parse_config({"transformer": {"d_model": 10, "heads": 4}})

    def test_subsampling_must_be_four(self):
        with pytest.raises(ValueError):
            FrontendConfig(strides=[2, 2, 2, 1])

    def test_reduced_feature_dim(self):
        assert FrontendConfig(feature_dim=83).reduced_feature_dim() == 21

    def test_resolve_model(self):
        config = ExperimentConfig(relaxation=RelaxationConfig(gamma=0.2), train=TrainConfig(dropout=0.3))
        model = config.resolve_model(vocab_size=9, feature_dim=12)
        assert model.vocab_size == 9
        assert model.frontend.feature_dim == 12
        assert model.relaxation.gamma == pytest.approx(0.2)
        assert model.transformer.dropout == pytest.approx(0.3)
        assert model.las.relaxation == model.transformer.relaxation


class TestOverride:
    def test_none_values_are_ignored(self):
        section = TrainConfig()
        assert override(section, epochs=None) is section

    def test_values_applied(self):
        assert override(TrainConfig(), epochs=4, seed=9).epochs == 4

    def test_revalidated(self):
        with pytest.raises(ConfigError):
            override(TransformerConfig(), heads=3)

    def test_learned_mode(self):
        relax = override(RelaxationConfig(), mode="learned", learned_init=0.2)
        assert relax.mode == "learned" and relax.learned_init == pytest.approx(0.2)


class TestSettings:
    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("RAED_LOG_LEVEL", "DEBUG")
        assert Settings().LOG_LEVEL == "DEBUG"


class TestMessages:
    def test_every_category_described(self):
        init_messages()
        for category in ("config", "shape_mismatch", "vocabulary", "numerical", "format", "data",
                         "decoding", "scoring", "training"):
            assert describe(category) != describe("internal")

    def test_unknown_category_falls_back(self):
        assert describe("no-such-category") == describe("internal")
