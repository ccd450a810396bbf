"""Teacher-forced training loop with per-epoch validation and checkpoints."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from raed.config.schema import ExperimentConfig, ModelConfig
from raed.data.batching import iter_batches
from raed.data.records import Batch, Utterance
from raed.data.vocab import Vocabulary
from raed.decoding.beam import greedy_decode, strip_eos
from raed.decoding.lm import ToyLm
from raed.decoding.runner import decode_corpus
from raed.evaluation.entropy import row_entropy
from raed.evaluation.scoring import score_corpus, token_error_rate
from raed.models.attention import capture_attention
from raed.models.base import AedModel
from raed.models.checkpoint import read_tensors, save_checkpoint, write_tensors
from raed.tensor import Tensor, no_grad
from raed.training.augment import spec_augment
from raed.training.loss import smoothed_cross_entropy
from raed.training.optim import AdamState, adam_step
from raed.training.schedule import TriStage
from raed.utils.errors import NumericalError, TrainingError, error_id
from raed.utils.logging import get_logger, run_log
from raed.utils.metrics import LEARNING_RATE, RELAX_GAMMA, TRAIN_LOSS, TRAIN_STEPS

log = get_logger(__name__)

PathLike = Union[str, Path]
RNG_STREAMS = ("shuffle", "dropout", "augment")


class _StateMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epoch: int = 0
    step: int = 0
    best_metric: Optional[float] = None
    best_epoch: int = 0
    rng_states: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    gammas: Dict[str, float] = Field(default_factory=dict)


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    adam: AdamState = field(default_factory=AdamState)
    rng_states: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    best_metric: Optional[float] = None
    best_epoch: int = 0
    gammas: Dict[str, float] = field(default_factory=dict)

    def save(self, run_dir: Path) -> None:
        write_tensors(run_dir / "state.raed", self.adam.tensors())
        meta = _StateMeta(
            epoch=self.epoch,
            step=self.step,
            best_metric=self.best_metric,
            best_epoch=self.best_epoch,
            rng_states=self.rng_states,
            gammas=self.gammas,
        )
        (run_dir / "state.json").write_text(meta.model_dump_json(indent=2), encoding="utf-8")

    @classmethod
    def load(cls, run_dir: Path) -> "TrainState":
        path = run_dir / "state.json"
        if not path.is_file():
            raise TrainingError(f"nothing to resume in {run_dir}")
        meta = _StateMeta.model_validate_json(path.read_text(encoding="utf-8"))
        return cls(
            epoch=meta.epoch,
            step=meta.step,
            adam=AdamState.from_tensors(read_tensors(run_dir / "state.raed")),
            rng_states=meta.rng_states,
            best_metric=meta.best_metric,
            best_epoch=meta.best_epoch,
            gammas=meta.gammas,
        )


@dataclass
class TrainResult:
    state: TrainState
    records: List[Dict[str, Any]]
    run_dir: Path

    @property
    def best_checkpoint(self) -> Path:
        return self.run_dir / "best.raed"

    @property
    def last_checkpoint(self) -> Path:
        return self.run_dir / f"epoch{self.state.epoch}.raed"


class Trainer:
    def __init__(
        self,
        model: AedModel,
        model_config: ModelConfig,
        config: ExperimentConfig,
        run_dir: PathLike,
        train_utts: Sequence[Utterance],
        dev_utts: Sequence[Utterance],
        vocab: Vocabulary,
        lm: Optional[ToyLm] = None,
    ) -> None:
        if not train_utts:
            raise TrainingError("empty training set")
        self.model = model
        self.model_config = model_config
        self.config = config
        self.run_dir = Path(run_dir)
        self.train_utts = list(train_utts)
        self.dev_utts = list(dev_utts)
        self.vocab = vocab
        self.lm = lm
        if config.train.selection_metric == "wer_lm" and lm is None:
            raise TrainingError("selection by WER with LM needs an LM")
        self.params = dict(model.named_parameters())
        seeds = np.random.SeedSequence(config.train.seed).spawn(len(RNG_STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, seeds)}
        steps_per_epoch = math.ceil(len(self.train_utts) / config.train.batch_size)
        self.schedule = TriStage.from_config(config.train, steps_per_epoch * config.train.epochs)
        self.state = TrainState()
        self.metrics_path = self.run_dir / "metrics.jsonl"

    # -- resume ------------------------------------------------------------

    def resume(self) -> None:
        self.state = TrainState.load(self.run_dir)
        self.model.load_state_dict(read_tensors(self.run_dir / f"epoch{self.state.epoch}.raed"))
        for name, rng in self.rngs.items():
            rng.bit_generator.state = self.state.rng_states[name]
        if self.metrics_path.is_file():
            lines = self.metrics_path.read_text(encoding="utf-8").splitlines(keepends=True)
            self.metrics_path.write_text("".join(lines[: self.state.epoch]), encoding="utf-8")
        log.info("resumed run=%s epoch=%d step=%d", self.run_dir, self.state.epoch, self.state.step)

    # -- one step ------------------------------------------------------------

    def _augment(self, features: np.ndarray) -> np.ndarray:
        tc = self.config.train
        frames, dims = features.shape
        return spec_augment(
            features,
            tc.time_masks, min(tc.time_mask_width, frames - 1),
            tc.freq_masks, min(tc.freq_mask_width, dims - 1),
            self.rngs["augment"],
        )

    def _dump_batch(self, batch: Batch, message: str) -> Path:
        path = self.run_dir / "dumps" / f"{error_id(NumericalError(message))}.raed"
        write_tensors(
            path,
            {
                "features": batch.features,
                "lengths": batch.lengths.astype(np.float64),
                "targets": batch.targets.astype(np.float64),
            },
        )
        return path

    def train_step(self, batch: Batch) -> Dict[str, float]:
        tc = self.config.train
        with capture_attention(("cross",)) as recorder:
            log_probs = self.model.forward(
                Tensor(batch.features), batch.lengths, batch.prev_tokens(), True, self.rngs["dropout"]
            )
        loss = smoothed_cross_entropy(log_probs, batch.targets, tc.label_smoothing, batch.target_mask)
        if not np.isfinite(loss.item()):
            message = f"non-finite loss at step {self.state.step}"
            path = self._dump_batch(batch, message)
            raise NumericalError(f"{message}; batch dumped to {path}")

        self.model.zero_grad()
        loss.backward()
        lr = self.schedule(self.state.step)
        adam_step(self.params, self.state.adam, lr, tc.adam_beta1, tc.adam_beta2, tc.adam_eps, tc.grad_clip)
        self.state.step += 1

        entropy_sum, rows = 0.0, 0
        for rec in recorder.records:
            h = row_entropy(rec.values, rec.frame_validity)  # [B, heads, L]
            keep = np.broadcast_to(batch.target_mask[:, None, :], h.shape)
            entropy_sum += float(h[keep].sum())
            rows += int(keep.sum())

        TRAIN_STEPS.inc()
        TRAIN_LOSS.set(loss.item())
        LEARNING_RATE.set(lr)
        return {"loss": loss.item(), "lr": lr, "entropy_sum": entropy_sum, "rows": rows}

    # -- epochs --------------------------------------------------------------

    def train_epoch(self) -> Dict[str, float]:
        tc = self.config.train
        transform = self._augment if tc.spec_augment else None
        losses, entropy_sum, rows, lr = [], 0.0, 0, 0.0
        for batch in iter_batches(self.train_utts, tc.batch_size, self.rngs["shuffle"], transform):
            out = self.train_step(batch)
            losses.append(out["loss"])
            entropy_sum += out["entropy_sum"]
            rows += out["rows"]
            lr = out["lr"]
        return {
            "lr": lr,
            "train_loss": float(np.mean(losses)),
            "mean_attn_entropy": entropy_sum / rows if rows else 0.0,
        }

    def evaluate(self) -> Dict[str, float]:
        tc = self.config.train
        if not self.dev_utts:
            return {"val_loss": float("nan"), "val_ter": float("nan")}
        loss_sum, positions = 0.0, 0
        refs, hyps = [], []
        with no_grad():
            for batch in iter_batches(self.dev_utts, tc.batch_size):
                enc = self.model.encode(Tensor(batch.features), batch.lengths)
                log_probs = self.model.decode_all(enc, batch.prev_tokens())
                n = int(batch.target_mask.sum())
                loss_sum += smoothed_cross_entropy(log_probs, batch.targets, tc.label_smoothing, batch.target_mask).item() * n
                positions += n
                decoded = greedy_decode(self.model, enc, self.config.fusion.max_len_ratio)
                hyps.extend(strip_eos(d) for d in decoded)
                refs.extend(strip_eos(list(t)) for t in batch.targets)
        out = {"val_loss": loss_sum / positions, "val_ter": token_error_rate(refs, hyps)}
        if tc.selection_metric == "wer_lm":
            results = decode_corpus(self.model, self.dev_utts, self.vocab, self.lm, self.config.fusion)
            report = score_corpus(
                {u.utt_id: self.vocab.to_text(u.tokens) for u in self.dev_utts},
                {r.result.utt_id: r.result.text for r in results},
            )
            out["val_wer_lm"] = report.wer
        return out

    def run(self, resume: bool = False) -> TrainResult:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with run_log(self.run_dir / "train.log"):
            return self._run(resume)

    def _run(self, resume: bool) -> TrainResult:
        if resume:
            self.resume()
        elif self.metrics_path.exists():
            self.metrics_path.unlink()
        records: List[Dict[str, Any]] = []
        if resume and self.metrics_path.is_file():
            records = [json.loads(line) for line in self.metrics_path.read_text(encoding="utf-8").splitlines()]
        selection_key = "val_wer_lm" if self.config.train.selection_metric == "wer_lm" else "val_ter"

        for epoch in range(self.state.epoch + 1, self.config.train.epochs + 1):
            started = time.monotonic()
            train_stats = self.train_epoch()
            val_stats = self.evaluate()
            gammas = self.model.learned_gammas()
            for block, value in gammas.items():
                RELAX_GAMMA.labels(block=block).set(value)

            record: Dict[str, Any] = {
                "epoch": epoch,
                "step": self.state.step,
                "lr": train_stats["lr"],
                "train_loss": train_stats["train_loss"],
                "val_loss": val_stats["val_loss"],
                "val_ter": val_stats["val_ter"],
                "mean_attn_entropy": train_stats["mean_attn_entropy"],
                "gamma": gammas,
            }
            if "val_wer_lm" in val_stats:
                record["val_wer_lm"] = val_stats["val_wer_lm"]
            records.append(record)
            with self.metrics_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

            save_checkpoint(self.run_dir / f"epoch{epoch}.raed", self.model, self.model_config)
            metric = val_stats[selection_key]
            if self.state.best_metric is None or metric < self.state.best_metric:
                self.state.best_metric, self.state.best_epoch = float(metric), epoch
                save_checkpoint(self.run_dir / "best.raed", self.model, self.model_config)

            self.state.epoch = epoch
            self.state.gammas = gammas
            self.state.rng_states = {name: rng.bit_generator.state for name, rng in self.rngs.items()}
            self.state.save(self.run_dir)
            log.info(
                "epoch=%d step=%d train_loss=%.4f val_loss=%.4f val_ter=%.4f entropy=%.4f gamma=%s elapsed=%.1fs",
                epoch, self.state.step, record["train_loss"], record["val_loss"], record["val_ter"],
                record["mean_attn_entropy"], gammas, time.monotonic() - started,
            )
        return TrainResult(self.state, records, self.run_dir)


def train(
    model: AedModel,
    model_config: ModelConfig,
    config: ExperimentConfig,
    run_dir: PathLike,
    train_utts: Sequence[Utterance],
    dev_utts: Sequence[Utterance],
    vocab: Vocabulary,
    *,
    lm: Optional[ToyLm] = None,
    resume: bool = False,
) -> TrainResult:
    return Trainer(model, model_config, config, run_dir, train_utts, dev_utts, vocab, lm).run(resume)
