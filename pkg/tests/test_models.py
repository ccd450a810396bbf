"""Transformer and LAS encoder-decoders: shapes, masking, incremental
decoding, checkpoints and parameter accounting."""

import numpy as np
import pytest

from raed.config.schema import FrontendConfig, LasConfig, RelaxationConfig, TransformerConfig
from raed.models.base import EOS_ID, shift_right
from raed.models.checkpoint import load_checkpoint, read_tensors, save_checkpoint, sidecar_path, write_tensors
from raed.models.frontend import frontend_forward, subsampled_lengths
from raed.models.las import las_decode_step, las_encode
from raed.models.layers import Module
from raed.models.registry import (
    build_model,
    expected_parameter_count,
    las_parameter_count,
    match_architecture,
    transformer_parameter_count,
)
from raed.tensor import Tensor, ops
from raed.tensor.gradcheck import check_gradients
from raed.utils.errors import ConfigError, FormatError, ShapeError, VocabularyError

from conftest import TINY_FEATURES, TINY_VOCAB, tiny_model_config

ARCHS = ["transformer", "las"]


def _features(rng, batch, frames):
    return Tensor(rng.normal(size=(batch, frames, TINY_FEATURES)))


def _targets(rng, batch, length):
    return rng.integers(2, TINY_VOCAB, size=(batch, length))


class TestFrontend:
    @pytest.mark.parametrize("frames, expected", [(16, 4), (17, 5), (4, 1)])
    def test_subsampled_length(self, frames, expected):
        assert subsampled_lengths(np.array([frames]), [1, 2, 1, 2])[0] == expected

    @pytest.mark.parametrize("arch", ARCHS)
    def test_encoder_length(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        enc = model.encode(_features(rng, 2, 17), np.array([17, 16]))
        assert enc.h.shape[:2] == (2, 5)
        np.testing.assert_array_equal(enc.lengths, [5, 4])
        np.testing.assert_array_equal(enc.frame_mask[1], [True, True, True, True, False])

    def test_too_few_frames(self, rng):
        model = build_model(tiny_model_config())
        with pytest.raises(ShapeError):
            model.encode(_features(rng, 1, 3))

    def test_wrong_feature_dim(self, rng):
        model = build_model(tiny_model_config())
        with pytest.raises(ShapeError):
            model.encode(Tensor(rng.normal(size=(1, 16, TINY_FEATURES + 1))))

    def test_unbatched_frontend(self, rng):
        model = build_model(tiny_model_config())
        x = rng.normal(size=(18, TINY_FEATURES))
        out = frontend_forward(Tensor(x), model.frontend)
        assert out.shape == (5, 8)
        batched, _ = model.frontend(Tensor(x[None]))
        np.testing.assert_array_equal(out.data, batched.data[0])


class TestForward:
    @pytest.mark.parametrize("arch", ARCHS)
    def test_output_is_log_distribution(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        logp = model.forward(_features(rng, 2, 20), None, shift_right(_targets(rng, 2, 3)))
        assert logp.shape == (2, 3, TINY_VOCAB)
        np.testing.assert_allclose(np.exp(logp.data).sum(axis=-1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("arch", ARCHS)
    def test_zero_input_is_finite(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        logp = model.forward(Tensor(np.zeros((1, 16, TINY_FEATURES))), None, [[EOS_ID, 3]])
        assert np.all(np.isfinite(logp.data))

    @pytest.mark.parametrize("arch", ARCHS)
    def test_token_outside_vocabulary(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        enc = model.encode(_features(rng, 1, 16))
        with pytest.raises(VocabularyError):
            model.decode_all(enc, [[EOS_ID, TINY_VOCAB]])

    @pytest.mark.parametrize("arch", ARCHS)
    def test_decoder_is_causal(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        enc = model.encode(_features(rng, 1, 20))
        a = model.decode_all(enc, [[EOS_ID, 3, 4, 5]]).data
        b = model.decode_all(enc, [[EOS_ID, 3, 6, 2]]).data
        np.testing.assert_allclose(a[:, :2], b[:, :2], atol=1e-12)
        assert not np.allclose(a[:, 2:], b[:, 2:])

    @pytest.mark.parametrize("arch", ARCHS)
    def test_step_matches_teacher_forcing(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        enc = model.encode(_features(rng, 2, 24), np.array([24, 18]))
        prev = shift_right(_targets(rng, 2, 5))
        full = model.decode_all(enc, prev).data

        state = model.init_state(enc)
        steps = []
        for t in range(prev.shape[1]):
            logp, state = model.decode_step(enc, prev[:, t], state)
            steps.append(logp.data)
        np.testing.assert_allclose(np.stack(steps, axis=1), full, atol=1e-10)

    @pytest.mark.parametrize("arch", ARCHS)
    def test_padding_does_not_change_outputs(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        short = rng.normal(size=(13, TINY_FEATURES))
        long = rng.normal(size=(21, TINY_FEATURES))
        padded = np.zeros((2, 21, TINY_FEATURES))
        padded[0, :13] = short
        padded[1] = long
        prev = shift_right(_targets(rng, 2, 4))

        batched = model.forward(Tensor(padded), np.array([13, 21]), prev).data
        alone = model.forward(Tensor(short[None]), None, prev[:1]).data
        # padding content must not matter either
        padded[0, 13:] = 50.0
        noisy = model.forward(Tensor(padded), np.array([13, 21]), prev).data
        np.testing.assert_allclose(batched[0], alone[0], atol=1e-10)
        np.testing.assert_allclose(noisy, batched, atol=1e-10)

    @pytest.mark.parametrize("arch", ARCHS)
    def test_batch_permutation(self, rng, arch):
        model = build_model(tiny_model_config(arch))
        x = rng.normal(size=(3, 20, TINY_FEATURES))
        lengths = np.array([20, 16, 18])
        prev = shift_right(_targets(rng, 3, 4))
        order = np.array([2, 0, 1])
        out = model.forward(Tensor(x), lengths, prev).data
        permuted = model.forward(Tensor(x[order]), lengths[order], prev[order]).data
        np.testing.assert_allclose(permuted, out[order], atol=1e-12)


class TestLas:
    def test_uniform_relaxation_context_is_encoder_mean(self, rng):
        model = build_model(tiny_model_config("las", RelaxationConfig(gamma=1.0)))
        enc = model.encode(_features(rng, 2, 20), np.array([20, 12]))
        state = model.init_state(enc)
        out = model.step(enc, [EOS_ID, EOS_ID], state.z, state.cells, training=True, value_proj=state.value_proj)
        np.testing.assert_allclose(out.z.data[0], enc.h.data[0].mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(out.z.data[1], enc.h.data[1, :3].mean(axis=0), atol=1e-12)

    def test_output_layer_sees_state_and_context(self):
        model = build_model(tiny_model_config("las"))
        cfg = model.config
        assert model.out.weight.shape == (cfg.decoder_dim + cfg.encoder_dim, TINY_VOCAB)

    def test_forward_only_encoder_ignores_future_frames(self, rng):
        x = rng.normal(size=(1, 32, TINY_FEATURES))
        changed = x.copy()
        changed[:, 16:] += 1.0
        for bidirectional, should_match in ((False, True), (True, False)):
            model = build_model(tiny_model_config("las", bidirectional=bidirectional))
            a = model.encode(Tensor(x)).h.data[:, :2]
            b = model.encode(Tensor(changed)).h.data[:, :2]
            assert np.allclose(a, b, atol=1e-12) == should_match

    def test_relaxation_ignored_at_inference(self, rng):
        plain = build_model(tiny_model_config("las"))
        relaxed = build_model(tiny_model_config("las", RelaxationConfig(gamma=0.5)))
        x, prev = _features(rng, 1, 16), [[EOS_ID, 4, 5]]
        np.testing.assert_array_equal(plain.forward(x, None, prev).data, relaxed.forward(x, None, prev).data)

    def test_functional_forms_match_methods(self, rng):
        model = build_model(tiny_model_config("las"))
        x = _features(rng, 1, 16)
        enc = las_encode(model, x)
        np.testing.assert_array_equal(enc.h.data, model.encode(x).h.data)
        state = model.init_state(enc)
        out = las_decode_step(model, enc, [EOS_ID], state.z, state.cells)
        logp, _ = model.decode_step(enc, [EOS_ID], state)
        np.testing.assert_array_equal(out.log_probs.data, logp.data)
        assert out.weights.values.shape == (1, 1, 1, 4)


class TestTransformer:
    def test_gamma_zero_training_matches_baseline(self, rng):
        plain = build_model(tiny_model_config())
        relaxed = build_model(tiny_model_config(relaxation=RelaxationConfig(gamma=0.0)))
        x, prev = _features(rng, 2, 16), shift_right(_targets(rng, 2, 3))
        np.testing.assert_array_equal(
            plain.forward(x, None, prev, training=True).data,
            relaxed.forward(x, None, prev, training=True).data,
        )

    def test_learned_gammas_reported_per_block(self):
        model = build_model(tiny_model_config(relaxation=RelaxationConfig(mode="learned")))
        gammas = model.learned_gammas()
        assert sorted(gammas) == ["dec0", "dec1"]
        for value in gammas.values():
            assert value == pytest.approx(0.1)

    def test_fixed_gamma_not_reported(self):
        model = build_model(tiny_model_config(relaxation=RelaxationConfig(gamma=0.2)))
        assert model.learned_gammas() == {}

    def test_too_many_positions(self, rng):
        model = build_model(tiny_model_config())
        enc = model.encode(_features(rng, 1, 16))
        with pytest.raises(ShapeError):
            model.decode_all(enc, np.full((1, 65), 3))

    def test_micro_gradients(self, rng):
        model = build_model(tiny_model_config(relaxation=RelaxationConfig(mode="learned"), encoder_blocks=2))
        x = _features(rng, 1, 20)
        targets = _targets(rng, 1, 3)
        prev = shift_right(targets)
        onehot = np.eye(TINY_VOCAB)[targets]

        def loss():
            return -ops.sum(model.forward(x, None, prev, training=True) * onehot)

        errors = check_gradients(loss, dict(model.named_parameters()), max_entries=4, rng=np.random.default_rng(1))
        worst = max(errors, key=errors.get)
        assert errors[worst] < 1e-3, worst


class TestParameterCount:
    @pytest.mark.parametrize("arch", ARCHS)
    @pytest.mark.parametrize("relaxation", [None, RelaxationConfig(gamma=0.2), RelaxationConfig(mode="learned")])
    def test_formula_matches_model(self, arch, relaxation):
        config = tiny_model_config(arch, relaxation)
        assert build_model(config).num_parameters() == expected_parameter_count(config)

    def test_forward_only_las_formula(self):
        config = tiny_model_config("las", bidirectional=False, encoder_blocks=2)
        assert build_model(config).num_parameters() == expected_parameter_count(config)

    def test_full_scale_transformer(self):
        frontend = FrontendConfig(feature_dim=83, channels=[32, 32, 32, 32])
        config = TransformerConfig(encoder_blocks=12, decoder_blocks=6, d_model=256, heads=4, vocab_size=52)
        count = transformer_parameter_count(frontend, config)
        assert abs(count - 16.8e6) / 16.8e6 < 0.05

    def test_full_scale_las_same_order(self):
        frontend = FrontendConfig(feature_dim=83, channels=[32, 32, 32, 32])
        config = LasConfig(
            encoder_dim=512, attention_dim=512, decoder_dim=512, embed_dim=128,
            encoder_blocks=4, decoder_blocks=3, vocab_size=52,
        )
        assert 0.5 < las_parameter_count(frontend, config) / 17.8e6 < 2.0

    def test_unknown_architecture(self):
        assert match_architecture("conformer") is None

    def test_duplicate_names_rejected(self, rng):
        module = Module()
        module.add_param("w", rng.normal(size=(2,)))
        with pytest.raises(ConfigError):
            module.add_param("w", rng.normal(size=(2,)))
        with pytest.raises(ConfigError):
            module.add_module("w", Module())


class TestCheckpoint:
    @pytest.mark.parametrize("arch", ARCHS)
    def test_round_trip_is_bit_identical(self, rng, tmp_path, arch):
        config = tiny_model_config(arch, RelaxationConfig(mode="learned"))
        model = build_model(config)
        path = tmp_path / "model.raed"
        save_checkpoint(path, model, config)
        loaded, loaded_config = load_checkpoint(path)

        assert loaded_config == config
        x, prev = _features(rng, 2, 20), shift_right(_targets(rng, 2, 4))
        np.testing.assert_array_equal(model.forward(x, None, prev).data, loaded.forward(x, None, prev).data)
        for name, value in model.state_dict().items():
            assert loaded.state_dict()[name].shape == value.shape, name

    def test_scalar_keeps_rank_zero(self, tmp_path):
        path = tmp_path / "state.raed"
        write_tensors(path, {"logit": np.array(-2.5), "vec": np.arange(3.0), "empty": np.zeros((0, 2))})
        back = read_tensors(path)

        assert back["logit"].shape == ()
        assert back["logit"] == -2.5
        np.testing.assert_array_equal(back["vec"], np.arange(3.0))
        assert back["empty"].shape == (0, 2)

    def test_corrupt_payload(self, tmp_path):
        config = tiny_model_config()
        path = tmp_path / "model.raed"
        save_checkpoint(path, build_model(config), config)
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_missing_sidecar(self, tmp_path):
        config = tiny_model_config()
        path = tmp_path / "model.raed"
        save_checkpoint(path, build_model(config), config)
        sidecar_path(path).unlink()
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_architecture_mismatch(self, tmp_path):
        config = tiny_model_config()
        path = tmp_path / "model.raed"
        save_checkpoint(path, build_model(config), config)
        sidecar_path(path).write_text(tiny_model_config("las").model_dump_json(), encoding="utf-8")
        with pytest.raises(FormatError):
            load_checkpoint(path)
