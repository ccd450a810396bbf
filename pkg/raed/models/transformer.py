"""Pre-norm transformer encoder-decoder on top of the convolutional frontend."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from raed.config.schema import ModelConfig, TransformerConfig
from raed.models.attention import (
    AttentionWeights,
    MhaParams,
    Relaxation,
    mha_forward,
    record_attention,
)
from raed.models.base import AedModel, EncoderOutput
from raed.models.frontend import Frontend, frame_mask
from raed.models.layers import Embedding, LayerNorm, Linear, Module
from raed.tensor import Tensor, ops
from raed.utils.errors import ShapeError


def sinusoidal_encoding(length: int, d_model: int, start: int = 0) -> np.ndarray:
    """Interleaved sin/cos absolute position encoding, rows start..start+length."""
    pos = np.arange(start, start + length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


class FeedForward(Module):
    def __init__(self, d_model: int, ff_dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.inner = self.add_module("inner", Linear(d_model, ff_dim, rng))
        self.outer = self.add_module("outer", Linear(ff_dim, d_model, rng))

    def __call__(self, x: Tensor, p: float, training: bool, rng) -> Tensor:
        return self.outer(ops.dropout(ops.relu(self.inner(x)), p, training, rng))


class EncoderBlock(Module):
    def __init__(self, config: TransformerConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.norm_self = self.add_module("norm_self", LayerNorm(config.d_model))
        self.self_attn = self.add_module("self_attn", MhaParams(config.d_model, config.heads, rng))
        self.norm_ff = self.add_module("norm_ff", LayerNorm(config.d_model))
        self.ff = self.add_module("ff", FeedForward(config.d_model, config.ff_dim, rng))

    def __call__(self, x: Tensor, mask: np.ndarray, training: bool, rng) -> Tensor:
        p = self.config.dropout
        y = self.norm_self(x)
        z, _ = mha_forward(
            y, y, y, self.self_attn, None, training, rng,
            key_mask=mask, dropout_p=self.config.attention_dropout,
        )
        x = x + ops.dropout(z, p, training, rng)
        return x + ops.dropout(self.ff(self.norm_ff(x), p, training, rng), p, training, rng)


class DecoderBlock(Module):
    """Masked self-attention, encoder-decoder attention (the only place the
    relaxation is applied), then the feed-forward sublayer."""

    def __init__(self, config: TransformerConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        d = config.d_model
        self.norm_self = self.add_module("norm_self", LayerNorm(d))
        self.self_attn = self.add_module("self_attn", MhaParams(d, config.heads, rng))
        self.norm_cross = self.add_module("norm_cross", LayerNorm(d))
        self.cross_attn = self.add_module("cross_attn", MhaParams(d, config.heads, rng))
        self.norm_ff = self.add_module("norm_ff", LayerNorm(d))
        self.ff = self.add_module("ff", FeedForward(d, config.ff_dim, rng))
        self.relaxation: Optional[Relaxation] = None
        relax = config.relaxation
        if relax is not None:
            logit = self.add_param("relax_logit", Relaxation.initial_logit(relax)) if relax.mode == "learned" else None
            self.relaxation = Relaxation(relax, logit)

    def __call__(
        self,
        x: Tensor,
        enc: EncoderOutput,
        training: bool,
        rng,
        *,
        self_kv: Optional[Tuple[Tensor, Tensor]] = None,
        cross_kv: Optional[Tuple[Tensor, Tensor]] = None,
    ) -> Tuple[Tensor, AttentionWeights]:
        p = self.config.dropout
        y = self.norm_self(x)
        z, _ = mha_forward(
            y, y, y, self.self_attn, None, training, rng,
            causal=True, dropout_p=self.config.attention_dropout, kv=self_kv,
        )
        x = x + ops.dropout(z, p, training, rng)
        y = self.norm_cross(x)
        z, weights = mha_forward(
            y, enc.h, enc.h, self.cross_attn, self.relaxation, training, rng,
            key_mask=enc.frame_mask, dropout_p=self.config.attention_dropout, kv=cross_kv,
        )
        x = x + ops.dropout(z, p, training, rng)
        x = x + ops.dropout(self.ff(self.norm_ff(x), p, training, rng), p, training, rng)
        return x, weights


@dataclass
class TransformerState:
    """Incremental decoding state: one self-attention K/V cache per block and
    the projected encoder keys/values."""

    position: int
    self_k: List[Tensor] = field(default_factory=list)
    self_v: List[Tensor] = field(default_factory=list)
    cross_kv: List[Tuple[Tensor, Tensor]] = field(default_factory=list)


class TransformerModel(AedModel):
    arch = "transformer"

    def __init__(self, config: ModelConfig, rng: np.random.Generator) -> None:
        tc = config.transformer
        super().__init__(tc.vocab_size)
        self.config = tc
        d = tc.d_model
        self.frontend = self.add_module("frontend", Frontend(config.frontend, d, rng))
        self.enc_blocks = [self.add_module(f"enc{i}", EncoderBlock(tc, rng)) for i in range(tc.encoder_blocks)]
        self.enc_norm = self.add_module("enc_norm", LayerNorm(d)) if tc.encoder_blocks > 0 else None
        self.embed = self.add_module("embed", Embedding(tc.vocab_size, d, rng))
        self.dec_blocks = [self.add_module(f"dec{i}", DecoderBlock(tc, rng)) for i in range(tc.decoder_blocks)]
        self.dec_norm = self.add_module("dec_norm", LayerNorm(d))
        self.out = self.add_module("out", Linear(d, tc.vocab_size, rng))

    def _positions(self, length: int, start: int = 0) -> np.ndarray:
        if start + length > self.config.max_positions:
            raise ShapeError(f"sequence of {start + length} positions exceeds max_positions={self.config.max_positions}")
        return sinusoidal_encoding(length, self.config.d_model, start)

    def encode(self, x, lengths=None, training=False, rng=None) -> EncoderOutput:
        h, out_lengths = self.frontend(x, lengths)
        mask = frame_mask(out_lengths, h.shape[1])
        h = h + self._positions(h.shape[1])
        h = ops.dropout(h, self.config.dropout, training, rng)
        for block in self.enc_blocks:
            h = block(h, mask, training, rng)
        if self.enc_norm is not None:
            h = self.enc_norm(h)
        return EncoderOutput(h, mask, out_lengths)

    def _head(self, x: Tensor) -> Tensor:
        return ops.log_softmax(self.out(self.dec_norm(x)), axis=-1)

    def decode_all(self, enc, prev_tokens, training=False, rng=None) -> Tensor:
        ids = self.check_tokens(prev_tokens)
        if ids.ndim != 2 or ids.shape[0] != enc.batch_size:
            raise ShapeError(f"decoder inputs {ids.shape} do not match batch of {enc.batch_size}")
        x = self.embed(ids) + self._positions(ids.shape[1])
        x = ops.dropout(x, self.config.dropout, training, rng)
        for i, block in enumerate(self.dec_blocks):
            x, weights = block(x, enc, training, rng)
            record_attention(f"dec{i}", "cross", weights)
        return self._head(x)

    def init_state(self, enc: EncoderOutput) -> TransformerState:
        return TransformerState(
            position=0,
            self_k=[None] * len(self.dec_blocks),
            self_v=[None] * len(self.dec_blocks),
            cross_kv=[b.cross_attn.project_kv(enc.h, enc.h) for b in self.dec_blocks],
        )

    def decode_step(self, enc, tokens, state: TransformerState) -> Tuple[Tensor, TransformerState]:
        ids = self.check_tokens(tokens).reshape(-1, 1)
        batch = ids.shape[0]
        if len(state.cross_kv) != len(self.dec_blocks) or state.cross_kv[0][0].shape[0] != batch:
            raise ShapeError("decoder state does not match this model or batch")
        x = self.embed(ids) + self._positions(1, state.position)
        new = TransformerState(state.position + 1, [], [], state.cross_kv)
        for i, block in enumerate(self.dec_blocks):
            y = block.norm_self(x)
            k, v = block.self_attn.project_kv(y, y)
            if state.self_k[i] is not None:
                cached = state.self_k[i].shape[2]
                if cached != state.position or state.self_k[i].shape[0] != batch:
                    raise ShapeError(f"stale cache in dec{i}: {cached} entries at position {state.position}")
                k = ops.concat([state.self_k[i], k], axis=2)
                v = ops.concat([state.self_v[i], v], axis=2)
            elif state.position != 0:
                raise ShapeError(f"missing cache in dec{i} at position {state.position}")
            new.self_k.append(k)
            new.self_v.append(v)
            x, _ = block(x, enc, False, None, self_kv=(k, v), cross_kv=state.cross_kv[i])
        logp = self._head(x)
        return ops.reshape(logp, (batch, self.vocab_size)), new

    def learned_gammas(self) -> Dict[str, float]:
        return {
            f"dec{i}": b.relaxation.gamma_value()
            for i, b in enumerate(self.dec_blocks)
            if b.relaxation is not None and b.relaxation.config.mode == "learned"
        }
