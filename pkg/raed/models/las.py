"""Listen-attend-and-spell: recurrent encoder, additive attention and a
three-block recurrent decoder."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from raed.config.schema import LasConfig, ModelConfig
from raed.models.attention import (
    AttentionWeights,
    BahdanauParams,
    Relaxation,
    bahdanau_forward,
    record_attention,
)
from raed.models.base import AedModel, EncoderOutput
from raed.models.frontend import Frontend, frame_mask
from raed.models.layers import Embedding, Linear, LSTMCell, Module, masked_state
from raed.tensor import Tensor, ops
from raed.utils.errors import ShapeError

LstmState = Tuple[Tensor, Tensor]


class RecurrentEncoderBlock(Module):
    """Dropout followed by a (bi)directional LSTM layer; padded frames neither
    update the state nor produce output."""

    def __init__(self, in_dim: int, config: LasConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        hidden = config.encoder_dim // 2 if config.bidirectional else config.encoder_dim
        self.fwd = self.add_module("fwd", LSTMCell(in_dim, hidden, rng))
        self.bwd = self.add_module("bwd", LSTMCell(in_dim, hidden, rng)) if config.bidirectional else None

    @staticmethod
    def _run(cell: LSTMCell, x: Tensor, mask: np.ndarray, order) -> List[Tensor]:
        batch = x.shape[0]
        state = cell.zero_state(batch)
        outputs: List[Optional[Tensor]] = [None] * x.shape[1]
        for t in order:
            m = mask[:, t : t + 1]
            state = masked_state(cell(x[:, t], state), state, m)
            outputs[t] = state[0] * m
        return outputs

    def __call__(self, x: Tensor, mask: np.ndarray, training: bool, rng) -> Tensor:
        x = ops.dropout(x, self.config.dropout, training, rng)
        frames = x.shape[1]
        fwd = self._run(self.fwd, x, mask, range(frames))
        if self.bwd is None:
            return ops.stack(fwd, axis=1)
        bwd = self._run(self.bwd, x, mask, range(frames - 1, -1, -1))
        return ops.stack([ops.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)], axis=1)


@dataclass
class LasState:
    z: Tensor  # previous context, [B, d_e]
    cells: List[LstmState]
    value_proj: Tensor  # [B, T, d_a]
    position: int = 0


@dataclass
class LasStepOutput:
    log_probs: Tensor  # [B, D]
    z: Tensor
    states: List[LstmState]
    weights: AttentionWeights  # g_l, [B, 1, 1, T]


class LasModel(AedModel):
    arch = "las"

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        lc = config.las
        super().__init__(lc.vocab_size)
        self.config = lc
        self.frontend = self.add_module("frontend", Frontend(config.frontend, lc.encoder_dim, rng))
        self.enc_blocks = [
            self.add_module(f"enc{i}", RecurrentEncoderBlock(lc.encoder_dim, lc, rng))
            for i in range(lc.encoder_blocks)
        ]
        self.embed = self.add_module("embed", Embedding(lc.vocab_size, lc.embed_dim, rng))
        self.attention = self.add_module(
            "attention", BahdanauParams(lc.encoder_dim, lc.attention_dim, lc.decoder_dim, rng)
        )
        cells = []
        for i in range(lc.decoder_blocks):
            in_dim = (lc.embed_dim if i == 0 else lc.decoder_dim) + lc.encoder_dim
            cells.append(self.add_module(f"dec{i}", LSTMCell(in_dim, lc.decoder_dim, rng)))
        self.dec_cells = cells
        self.out = self.add_module("out", Linear(lc.decoder_dim + lc.encoder_dim, lc.vocab_size, rng))
        self.relaxation: Optional[Relaxation] = None
        if lc.relaxation is not None:
            logit = (
                self.add_param("relax_logit", Relaxation.initial_logit(lc.relaxation))
                if lc.relaxation.mode == "learned"
                else None
            )
            self.relaxation = Relaxation(lc.relaxation, logit)

    def encode(self, x, lengths=None, training=False, rng=None) -> EncoderOutput:
        h, out_lengths = self.frontend(x, lengths)
        mask = frame_mask(out_lengths, h.shape[1])
        for block in self.enc_blocks:
            h = block(h, mask, training, rng)
        return EncoderOutput(h, mask, out_lengths)

    def init_state(self, enc: EncoderOutput) -> LasState:
        batch = enc.batch_size
        return LasState(
            z=Tensor(np.zeros((batch, self.config.encoder_dim))),
            cells=[cell.zero_state(batch) for cell in self.dec_cells],
            value_proj=self.attention.project_values(enc.h),
        )

    def step(
        self,
        enc: EncoderOutput,
        prev_tokens,
        z_prev: Tensor,
        states: List[LstmState],
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        *,
        value_proj: Optional[Tensor] = None,
    ) -> LasStepOutput:
        ids = self.check_tokens(prev_tokens).reshape(-1)
        if ids.shape[0] != enc.batch_size or len(states) != len(self.dec_cells):
            raise ShapeError("decoder state does not match this model or batch")
        p = self.config.dropout
        x = ops.concat([self.embed(ids), z_prev], axis=-1)
        h1, c1 = self.dec_cells[0](ops.dropout(x, p, training, rng), states[0])
        z, weights = bahdanau_forward(
            h1, enc.h, self.attention, self.relaxation, training,
            frame_mask=enc.frame_mask, value_proj=value_proj,
        )
        new_states = [(h1, c1)]
        o = h1
        for cell, state in zip(self.dec_cells[1:], states[1:]):
            h, c = cell(ops.dropout(ops.concat([o, z], axis=-1), p, training, rng), state)
            new_states.append((h, c))
            o = h + o
        logits = self.out(ops.concat([o, z], axis=-1))
        return LasStepOutput(ops.log_softmax(logits, axis=-1), z, new_states, weights)

    def decode_step(self, enc, tokens, state: LasState) -> Tuple[Tensor, LasState]:
        out = self.step(enc, tokens, state.z, state.cells, value_proj=state.value_proj)
        return out.log_probs, LasState(out.z, out.states, state.value_proj, state.position + 1)

    def decode_all(self, enc, prev_tokens, training=False, rng=None) -> Tensor:
        ids = self.check_tokens(prev_tokens)
        if ids.ndim != 2 or ids.shape[0] != enc.batch_size:
            raise ShapeError(f"decoder inputs {ids.shape} do not match batch of {enc.batch_size}")
        state = self.init_state(enc)
        z, cells = state.z, state.cells
        log_probs, weights = [], []
        for t in range(ids.shape[1]):
            out = self.step(enc, ids[:, t], z, cells, training, rng, value_proj=state.value_proj)
            z, cells = out.z, out.states
            log_probs.append(out.log_probs)
            weights.append(out.weights.values)
        g = ops.concat(weights, axis=2)
        record_attention("las", "cross", AttentionWeights(g, enc.frame_mask[:, None, None, :]))
        return ops.stack(log_probs, axis=1)

    def learned_gammas(self) -> Dict[str, float]:
        if self.relaxation is None or self.relaxation.config.mode != "learned":
            return {}
        return {"las": self.relaxation.gamma_value()}


def las_encode(model: LasModel, x: Tensor, lengths=None, training: bool = False, rng=None) -> EncoderOutput:
    return model.encode(x, lengths, training, rng)


def las_decode_step(
    model: LasModel,
    enc: EncoderOutput,
    prev_token,
    z_prev: Tensor,
    states: List[LstmState],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> LasStepOutput:
    return model.step(enc, prev_token, z_prev, states, training, rng)
