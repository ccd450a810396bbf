"""Token-level recurrent LM used for shallow fusion."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from raed.config.schema import LmConfig
from raed.models.base import BOS_ID, EOS_ID, PAD_ID
from raed.models.checkpoint import read_tensors, sidecar_path, write_tensors
from raed.models.layers import Embedding, Linear, LSTMCell, Module
from raed.tensor import Tensor, no_grad, ops
from raed.training.loss import smoothed_cross_entropy
from raed.training.optim import AdamState, adam_step
from raed.utils.errors import FormatError, TrainingError, VocabularyError
from raed.utils.logging import get_logger

log = get_logger(__name__)

PathLike = Union[str, Path]
LmState = Tuple[Tensor, Tensor]


class ToyLm(Module):
    def __init__(self, vocab_size: int, config: LmConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.vocab_size = vocab_size
        self.config = config
        self.embed = self.add_module("embed", Embedding(vocab_size, config.embed_dim, rng))
        self.cell = self.add_module("cell", LSTMCell(config.embed_dim, config.hidden_dim, rng))
        self.out = self.add_module("out", Linear(config.hidden_dim, vocab_size, rng))

    def init_state(self, batch: int) -> LmState:
        return self.cell.zero_state(batch)

    def step(self, tokens, state: LmState) -> Tuple[Tensor, LmState]:
        ids = np.asarray(tokens, dtype=np.int64).reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise VocabularyError(f"LM input outside vocabulary of size {self.vocab_size}")
        h, c = self.cell(self.embed(ids), state)
        return ops.log_softmax(self.out(h), axis=-1), (h, c)

    def sequence_log_probs(self, inputs: np.ndarray) -> Tensor:
        """[B, L] input ids -> [B, L, D] next-token log-probabilities."""
        state = self.init_state(inputs.shape[0])
        steps = []
        for t in range(inputs.shape[1]):
            logp, state = self.step(inputs[:, t], state)
            steps.append(logp)
        return ops.stack(steps, axis=1)


def _pack(sequences: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inputs (BOS + tokens), targets (tokens + EOS) and the non-pad mask."""
    width = max(len(s) for s in sequences) + 1
    targets = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(sequences):
        targets[i, : len(s)] = s
        targets[i, len(s)] = EOS_ID
    inputs = np.empty_like(targets)
    inputs[:, 0] = BOS_ID
    inputs[:, 1:] = targets[:, :-1]
    return inputs, targets, targets != PAD_ID


def perplexity(lm: ToyLm, sequences: Sequence[Sequence[int]], batch_size: int = 64) -> float:
    """exp of the mean negative log-likelihood per token, EOS included."""
    nll, count = 0.0, 0
    with no_grad():
        for start in range(0, len(sequences), batch_size):
            inputs, targets, mask = _pack(sequences[start : start + batch_size])
            logp = lm.sequence_log_probs(inputs).data
            picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
            nll -= float(picked[mask].sum())
            count += int(mask.sum())
    return float(np.exp(nll / count))


@dataclass
class LmReport:
    train_sequences: int
    heldout_sequences: int
    heldout_perplexity: List[float] = field(default_factory=list)


def train_toy_lm(
    sequences: Sequence[Sequence[int]], vocab_size: int, config: LmConfig
) -> Tuple[ToyLm, LmReport]:
    if not sequences:
        raise TrainingError("empty LM corpus")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(sequences))
    n_held = int(len(sequences) * config.heldout_frac)
    heldout = [list(sequences[i]) for i in order[:n_held]]
    train = [list(sequences[i]) for i in order[n_held:]]
    if len(train) < config.batch_size:
        raise TrainingError(f"LM corpus of {len(train)} sequences is smaller than one batch ({config.batch_size})")

    lm = ToyLm(vocab_size, config, rng)
    params = dict(lm.named_parameters())
    adam = AdamState()
    report = LmReport(len(train), len(heldout))
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(train))
        total = 0.0
        batches = 0
        for start in range(0, len(perm), config.batch_size):
            inputs, targets, mask = _pack([train[i] for i in perm[start : start + config.batch_size]])
            loss = smoothed_cross_entropy(lm.sequence_log_probs(inputs), targets, 0.0, mask)
            lm.zero_grad()
            loss.backward()
            adam_step(params, adam, config.lr, grad_clip=config.grad_clip)
            total += loss.item()
            batches += 1
        if heldout:
            report.heldout_perplexity.append(perplexity(lm, heldout))
        log.info(
            "lm epoch=%d train_loss=%.4f heldout_ppl=%s",
            epoch, total / batches, f"{report.heldout_perplexity[-1]:.3f}" if heldout else "n/a",
        )
    return lm, report


class _LmSidecar(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vocab_size: int
    config: LmConfig


def save_lm(path: PathLike, lm: ToyLm) -> None:
    write_tensors(path, lm.state_dict())
    sidecar_path(path).write_text(
        _LmSidecar(vocab_size=lm.vocab_size, config=lm.config).model_dump_json(indent=2), encoding="utf-8"
    )


def load_lm(path: PathLike, vocab_size: Optional[int] = None) -> ToyLm:
    side = sidecar_path(path)
    if not side.is_file():
        raise FormatError(f"missing LM sidecar: {side}")
    meta = _LmSidecar.model_validate_json(side.read_text(encoding="utf-8"))
    if vocab_size is not None and meta.vocab_size != vocab_size:
        raise VocabularyError(f"LM vocabulary {meta.vocab_size} != model vocabulary {vocab_size}")
    lm = ToyLm(meta.vocab_size, meta.config, np.random.default_rng(meta.config.seed))
    lm.load_state_dict(read_tensors(path))
    return lm
