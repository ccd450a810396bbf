"""Loss, learning-rate schedule, optimizer, spec-augment and the training loop."""

import json
import logging

import numpy as np
import pytest

from raed.config.schema import ExperimentConfig, RelaxationConfig, TrainConfig
from raed.data.manifest import load_split
from raed.models.checkpoint import read_tensors, write_tensors
from raed.models.registry import build_model
from raed.tensor import Tensor, ops
from raed.training.augment import apply_masks, sample_mask_spans, spec_augment
from raed.training.loss import smoothed_cross_entropy
from raed.training.optim import AdamState, adam_step
from raed.training.schedule import TriStage, tri_stage_lr
from raed.training.trainer import Trainer, train
from raed.utils.errors import ConfigError, NumericalError, ShapeError, TrainingError, VocabularyError

from conftest import tiny_model_config


class TestSmoothedCrossEntropy:
    def test_uniform_prediction_without_smoothing(self):
        logp = Tensor(np.log(np.full((1, 5), 0.2)))
        assert smoothed_cross_entropy(logp, [0], 0.0).item() == pytest.approx(np.log(5))

    def test_hand_arithmetic(self):
        logp = Tensor(np.log([[0.7, 0.3]]))
        assert smoothed_cross_entropy(logp, [0], 0.1).item() == pytest.approx(0.3990, abs=1e-4)

    def test_confident_correct_prediction(self):
        logp = ops.log_softmax(np.array([[60.0, 0.0, 0.0]]))
        assert smoothed_cross_entropy(logp, [0], 0.0).item() == pytest.approx(0.0, abs=1e-12)

    def test_pad_positions_are_ignored(self, rng):
        logp = ops.log_softmax(rng.normal(size=(2, 3, 4)))
        targets = np.array([[1, 2, 0], [3, 0, 0]])
        mask = targets != 0
        full = smoothed_cross_entropy(logp, targets, 0.1, mask).item()
        manual = np.mean([smoothed_cross_entropy(logp[i, j], targets[i, j], 0.1).item() for i, j in zip(*np.nonzero(mask))])
        assert full == pytest.approx(manual)

    @pytest.mark.parametrize("epsilon", [-0.1, 1.0])
    def test_epsilon_range(self, epsilon):
        with pytest.raises(ConfigError):
            smoothed_cross_entropy(Tensor(np.log([[0.5, 0.5]])), [0], epsilon)

    def test_target_outside_vocabulary(self):
        with pytest.raises(VocabularyError):
            smoothed_cross_entropy(Tensor(np.log([[0.5, 0.5]])), [2], 0.0)

    def test_all_positions_padded(self):
        with pytest.raises(ShapeError):
            smoothed_cross_entropy(Tensor(np.log([[0.5, 0.5]])), [0], 0.0, np.array([False]))


class TestTriStageSchedule:
    config = TrainConfig(peak_lr=1e-3, init_lr_scale=0.01, final_lr_scale=0.01)

    def test_starts_at_floor(self):
        assert tri_stage_lr(0, self.config, 100) == pytest.approx(1e-5)

    def test_peak_during_hold(self):
        schedule = TriStage.from_config(self.config, 100)
        assert schedule(10) == pytest.approx(1e-3)
        assert schedule(49) == pytest.approx(1e-3)

    def test_geometric_decay_midpoint(self):
        assert tri_stage_lr(75, self.config, 100) == pytest.approx(1e-4)

    def test_final_rate_after_schedule(self):
        assert tri_stage_lr(250, self.config, 100) == pytest.approx(1e-5)

    def test_continuous_at_boundaries(self):
        schedule = TriStage.from_config(self.config, 1000)
        for boundary in (schedule.warmup, schedule.warmup + schedule.hold):
            assert schedule(boundary - 1) == pytest.approx(schedule(boundary), rel=0.02)

    def test_zero_warmup_starts_at_peak(self):
        config = TrainConfig(warmup_frac=0.0, hold_frac=0.5, decay_frac=0.5)
        assert tri_stage_lr(0, config, 100) == pytest.approx(config.peak_lr)

    def test_negative_step(self):
        with pytest.raises(TrainingError):
            TriStage.from_config(self.config, 100)(-1)


def _params(rng, **shapes):
    return {name: Tensor(rng.normal(size=shape), requires_grad=True) for name, shape in shapes.items()}


class TestAdam:
    def test_zero_gradient_leaves_params(self, rng):
        params = _params(rng, w=(3, 2))
        before = params["w"].data.copy()
        params["w"].grad = np.zeros((3, 2))
        adam_step(params, AdamState(), lr=0.1)
        np.testing.assert_array_equal(params["w"].data, before)

    def test_first_step_moves_by_lr_times_sign(self, rng):
        params = _params(rng, w=(4,))
        before = params["w"].data.copy()
        g = np.array([0.5, -2.0, 3.0, -0.01])
        params["w"].grad = g.copy()
        adam_step(params, AdamState(), lr=0.01)
        np.testing.assert_allclose(params["w"].data - before, -0.01 * np.sign(g), rtol=1e-4)

    def test_missing_gradient(self, rng):
        params = _params(rng, w=(2,), b=(2,))
        params["w"].grad = np.ones(2)
        with pytest.raises(TrainingError):
            adam_step(params, AdamState(), lr=0.1)

    def test_clipping_scales_moments(self, rng):
        params = _params(rng, w=(2,))
        params["w"].grad = np.array([6.0, 8.0])
        state = AdamState()
        norm = adam_step(params, state, lr=0.1, grad_clip=1.0)
        assert norm == pytest.approx(10.0)
        np.testing.assert_allclose(state.m["w"], 0.1 * np.array([0.6, 0.8]))

    def test_state_tensors_round_trip(self, rng):
        params = _params(rng, w=(2, 2))
        params["w"].grad = np.ones((2, 2))
        state = AdamState()
        adam_step(params, state, lr=0.1)
        restored = AdamState.from_tensors(state.tensors())
        assert restored.step == 1
        np.testing.assert_array_equal(restored.v["w"], state.v["w"])

    def test_state_survives_container(self, rng, tmp_path):
        params = _params(rng, w=(2,))
        params["w"].grad = np.ones(2)
        state = AdamState()
        for _ in range(3):
            adam_step(params, state, lr=0.1)
        write_tensors(tmp_path / "opt.raed", state.tensors())
        stored = read_tensors(tmp_path / "opt.raed")
        assert stored["adam/step"].shape == ()
        assert AdamState.from_tensors(stored).step == 3


class TestSpecAugment:
    def test_no_masks_is_identity(self, rng):
        x = rng.normal(size=(30, 8))
        np.testing.assert_array_equal(spec_augment(x, 0, 5, 0, 3, rng), x)

    def test_zeroed_cells_match_spans(self, rng):
        x = rng.normal(size=(40, 10)) + 5.0
        time_spans = sample_mask_spans(40, 2, 6, rng)
        freq_spans = sample_mask_spans(10, 2, 3, rng)
        out = apply_masks(x, time_spans, freq_spans)
        expected = np.zeros(x.shape, dtype=bool)
        for start, width in time_spans:
            expected[start : start + width] = True
        for start, width in freq_spans:
            expected[:, start : start + width] = True
        np.testing.assert_array_equal(out == 0.0, expected)
        np.testing.assert_array_equal(out[~expected], x[~expected])

    def test_span_bounds(self, rng):
        for start, width in sample_mask_spans(20, 50, 7, rng):
            assert 0 <= width <= 7
            assert 0 <= start <= 20 - width

    def test_width_must_fit_axis(self, rng):
        with pytest.raises(ConfigError):
            sample_mask_spans(5, 1, 5, rng)

    def test_input_not_modified(self, rng):
        x = rng.normal(size=(20, 6))
        copy = x.copy()
        spec_augment(x, 2, 4, 2, 2, rng)
        np.testing.assert_array_equal(x, copy)


def _experiment(epochs=2, relaxation=None, **train_overrides):
    values = dict(epochs=epochs, batch_size=8, peak_lr=3e-3, seed=5)
    values.update(train_overrides)
    return ExperimentConfig(
        model=tiny_model_config(),
        relaxation=relaxation,
        train=TrainConfig(**values),
    )


def _trainer(tiny_dataset, run_dir, config):
    train_utts, vocab, manifest = load_split(tiny_dataset / "train.json")
    dev_utts, _, _ = load_split(tiny_dataset / "dev.json")
    model_config = config.resolve_model(len(vocab), manifest.feature_dim)
    return Trainer(build_model(model_config), model_config, config, run_dir, train_utts, dev_utts, vocab)


class _Interrupted(Exception):
    pass


class TestTrainer:
    def test_writes_metrics_and_checkpoints(self, tiny_dataset, tmp_path):
        result = _trainer(tiny_dataset, tmp_path, _experiment()).run()
        lines = (tmp_path / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines]
        assert [r["epoch"] for r in records] == [1, 2]
        assert set(records[0]) >= {"epoch", "step", "lr", "train_loss", "val_loss", "val_ter", "mean_attn_entropy", "gamma"}
        assert records[0]["gamma"] == {}
        assert result.best_checkpoint.is_file()
        assert result.last_checkpoint == tmp_path / "epoch2.raed"
        assert result.last_checkpoint.is_file()

    def test_run_log_beside_metrics(self, tiny_dataset, tmp_path, caplog):
        caplog.set_level(logging.INFO, logger="raed")
        _trainer(tiny_dataset, tmp_path, _experiment()).run()
        lines = (tmp_path / "train.log").read_text(encoding="utf-8").splitlines()
        assert sum("epoch=" in line and "val_ter=" in line for line in lines) == 2
        assert not logging.getLogger("raed").handlers

    def test_same_seed_same_parameters(self, tiny_dataset, tmp_path):
        config = _experiment(epochs=1)
        _trainer(tiny_dataset, tmp_path / "a", config).run()
        _trainer(tiny_dataset, tmp_path / "b", config).run()
        assert (tmp_path / "a" / "epoch1.raed").read_bytes() == (tmp_path / "b" / "epoch1.raed").read_bytes()

    def test_learned_gamma_logged(self, tiny_dataset, tmp_path):
        result = _trainer(tiny_dataset, tmp_path, _experiment(1, RelaxationConfig(mode="learned"))).run()
        assert sorted(result.records[0]["gamma"]) == ["dec0", "dec1"]

    @pytest.mark.parametrize("relaxation", [None, RelaxationConfig(mode="learned")], ids=["fixed", "learned"])
    def test_resume_matches_uninterrupted_run(self, tiny_dataset, tmp_path, monkeypatch, relaxation):
        config = _experiment(relaxation=relaxation, spec_augment=True, time_mask_width=3, freq_mask_width=2)
        _trainer(tiny_dataset, tmp_path / "full", config).run()

        interrupted = _trainer(tiny_dataset, tmp_path / "resumed", config)
        evaluate = interrupted.evaluate
        calls = []

        def stop_in_second_epoch():
            calls.append(1)
            if len(calls) == 2:
                raise _Interrupted()
            return evaluate()

        monkeypatch.setattr(interrupted, "evaluate", stop_in_second_epoch)
        with pytest.raises(_Interrupted):
            interrupted.run()

        _trainer(tiny_dataset, tmp_path / "resumed", config).run(resume=True)
        full = (tmp_path / "full" / "epoch2.raed").read_bytes()
        assert (tmp_path / "resumed" / "epoch2.raed").read_bytes() == full
        assert len((tmp_path / "resumed" / "metrics.jsonl").read_text(encoding="utf-8").splitlines()) == 2

    def test_resume_without_state(self, tiny_dataset, tmp_path):
        with pytest.raises(TrainingError):
            _trainer(tiny_dataset, tmp_path, _experiment()).run(resume=True)

    def test_non_finite_loss_dumps_batch(self, tiny_dataset, tmp_path):
        trainer = _trainer(tiny_dataset, tmp_path, _experiment())
        trainer.model.out.weight.data[:] = np.nan
        with pytest.raises(NumericalError):
            trainer.run()
        assert list((tmp_path / "dumps").glob("*.raed"))

    def test_lm_selection_needs_lm(self, tiny_dataset, tmp_path):
        with pytest.raises(TrainingError):
            _trainer(tiny_dataset, tmp_path, _experiment(selection_metric="wer_lm"))

    def test_empty_training_set(self, tiny_dataset, tmp_path):
        config = _experiment()
        _, vocab, manifest = load_split(tiny_dataset / "train.json")
        model_config = config.resolve_model(len(vocab), manifest.feature_dim)
        with pytest.raises(TrainingError):
            train(build_model(model_config), model_config, config, tmp_path, [], [], vocab)

    @pytest.mark.slow
    def test_loss_decreases(self, tiny_dataset, tmp_path):
        result = _trainer(tiny_dataset, tmp_path, _experiment(epochs=6)).run()
        assert result.records[-1]["train_loss"] < result.records[0]["train_loss"]
