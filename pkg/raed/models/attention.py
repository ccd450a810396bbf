"""Scaled dot-product multi-head attention, additive (Bahdanau) attention and
relaxed attention.

Relaxed attention mixes the softmax attention weights with a uniform
distribution over the valid encoder frames during training:

    G~ = (1 - gamma) * G + gamma * 1 / T_valid

It is only ever wired into encoder-decoder attention; self-attention layers
call `mha_forward` without a relaxation.
"""

from __future__ import annotations

import contextvars
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.special import logit

from raed.config.schema import RelaxationConfig
from raed.models.layers import Module, xavier_uniform
from raed.tensor import Tensor, ops
from raed.utils.errors import ConfigError, ShapeError

Gamma = Union[float, Tensor]


@dataclass
class AttentionWeights:
    """Row-stochastic weights over encoder frames.

    `values` is [..., rows, T] (transformer: [B, heads, L, T]; LAS: [B, 1, 1, T]).
    `frame_validity` is a boolean mask broadcastable to `values`; weights on
    invalid frames are zero.
    """

    values: Tensor
    frame_validity: Optional[np.ndarray] = None

    def valid_mask(self) -> np.ndarray:
        if self.frame_validity is None:
            return np.ones(self.values.shape, dtype=bool)
        return np.broadcast_to(self.frame_validity, self.values.shape)

    def per_head(self) -> List["AttentionWeights"]:
        """Split the head axis (-3) into one AttentionWeights per head."""
        heads = self.values.shape[-3]
        mask = None if self.frame_validity is None else self.valid_mask()
        out = []
        for i in range(heads):
            v = self.values[..., i, :, :]
            m = None if mask is None else mask[..., i, :, :]
            out.append(AttentionWeights(v, m))
        return out


# -- capture hook ------------------------------------------------------------


@dataclass
class CapturedAttention:
    layer: str
    kind: str  # "enc_self" | "dec_self" | "cross"
    values: np.ndarray
    frame_validity: np.ndarray


@dataclass
class AttentionRecorder:
    kinds: Tuple[str, ...] = ("cross",)
    records: List[CapturedAttention] = field(default_factory=list)

    def record(self, layer: str, kind: str, weights: AttentionWeights) -> None:
        if kind not in self.kinds:
            return
        self.records.append(
            CapturedAttention(layer, kind, weights.values.data.copy(), weights.valid_mask().copy())
        )


_recorder: contextvars.ContextVar[Optional[AttentionRecorder]] = contextvars.ContextVar(
    "raed_attention_recorder", default=None
)


@contextmanager
def capture_attention(kinds: Tuple[str, ...] = ("cross",)) -> Iterator[AttentionRecorder]:
    """Record attention weights produced inside the block (per thread / task)."""
    recorder = AttentionRecorder(kinds=kinds)
    token = _recorder.set(recorder)
    try:
        yield recorder
    finally:
        _recorder.reset(token)


def record_attention(layer: str, kind: str, weights: AttentionWeights) -> None:
    recorder = _recorder.get()
    if recorder is not None:
        recorder.record(layer, kind, weights)


# -- relaxation ----------------------------------------------------------------


class Relaxation:
    """Runtime relaxation: a config plus, in learned mode, the per-block logit."""

    def __init__(self, config: RelaxationConfig, logit_param: Optional[Tensor] = None) -> None:
        if config.mode == "learned" and logit_param is None:
            raise ConfigError("learned relaxation needs a logit parameter")
        self.config = config
        self.logit_param = logit_param

    @staticmethod
    def initial_logit(config: RelaxationConfig) -> np.ndarray:
        return np.array(logit(config.learned_init))

    def gamma(self) -> Gamma:
        if self.config.mode == "learned":
            return ops.sigmoid(self.logit_param)
        return self.config.gamma

    def gamma_value(self) -> float:
        g = self.gamma()
        return g.item() if isinstance(g, Tensor) else float(g)


def relax_weights(G: AttentionWeights, gamma: Gamma, frame_validity: Optional[np.ndarray] = None) -> AttentionWeights:
    """(1 - gamma) * G + gamma * uniform over valid frames; rows stay stochastic."""
    if not isinstance(gamma, Tensor):
        gamma = float(gamma)
        if not 0.0 <= gamma <= 1.0:
            raise ConfigError(f"relaxation coefficient must lie in [0, 1], got {gamma}")
    validity = frame_validity if frame_validity is not None else G.frame_validity
    if validity is None:
        valid = np.ones(G.values.shape, dtype=bool)
    else:
        valid = np.broadcast_to(np.asarray(validity, dtype=bool), G.values.shape)
    counts = valid.sum(axis=-1, keepdims=True)
    if np.any(counts == 0):
        raise ShapeError("relaxation row has no valid frames")
    uniform = valid / counts
    relaxed = ops.add(ops.mul(ops.sub(1.0, gamma), G.values), ops.mul(gamma, uniform))
    return AttentionWeights(relaxed, validity)


def _as_relaxation(relax) -> Optional[Relaxation]:
    if relax is None or isinstance(relax, Relaxation):
        return relax
    if isinstance(relax, RelaxationConfig):
        return Relaxation(relax)
    raise TypeError(f"unsupported relaxation: {type(relax).__name__}")


# -- scaled dot-product multi-head attention -------------------------------------


class MhaParams(Module):
    """Per-head projections W_i^(Q), W_i^(K), W_i^(V) stored as column blocks of
    d x d matrices, plus the d x d output projection."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator) -> None:
        super().__init__()
        if heads < 1 or d_model % heads:
            raise ShapeError(f"d_model={d_model} is not divisible by heads={heads}")
        self.d_model, self.heads = d_model, heads
        self.d_head = d_model // heads
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w_{name}", self.add_param(f"w_{name}", xavier_uniform(rng, d_model, d_model, (d_model, d_model))))
            setattr(self, f"b_{name}", self.add_param(f"b_{name}", np.zeros(d_model)))

    def split_heads(self, x: Tensor) -> Tensor:
        b, n = x.shape[0], x.shape[1]
        return ops.transpose(ops.reshape(x, (b, n, self.heads, self.d_head)), (0, 2, 1, 3))

    def merge_heads(self, x: Tensor) -> Tensor:
        b, n = x.shape[0], x.shape[2]
        return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, n, self.d_model))

    def project_kv(self, K: Tensor, V: Tensor) -> Tuple[Tensor, Tensor]:
        k = self.split_heads(ops.matmul(K, self.w_k) + self.b_k)
        v = self.split_heads(ops.matmul(V, self.w_v) + self.b_v)
        return k, v


def mha_forward(
    Q: Tensor,
    K: Optional[Tensor],
    V: Optional[Tensor],
    params: MhaParams,
    relax=None,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    *,
    key_mask: Optional[np.ndarray] = None,
    causal: bool = False,
    dropout_p: float = 0.0,
    kv: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tuple[Tensor, AttentionWeights]:
    """Multi-head attention for Q: [B, L, d] over K, V: [B, T, d].

    `key_mask` ([B, T], True = valid frame) masks padded frames, `causal`
    masks future positions, and `kv` supplies already projected keys/values
    ([B, heads, T, d_head]) instead of K and V. Relaxation applies only when
    `training` is true. Returns Z: [B, L, d] and the weights of all heads.
    """
    relax = _as_relaxation(relax)
    if Q.ndim != 3 or Q.shape[-1] != params.d_model:
        raise ShapeError(f"query shape {Q.shape} does not match d_model={params.d_model}")
    if kv is None:
        if K is None or V is None or K.shape != V.shape or K.shape[-1] != params.d_model:
            raise ShapeError(f"key/value shapes {getattr(K, 'shape', None)}/{getattr(V, 'shape', None)} invalid")
        kv = params.project_kv(K, V)
    k, v = kv
    batch, length = Q.shape[0], Q.shape[1]
    frames = k.shape[2]

    mask = np.ones((batch, 1, length, frames), dtype=bool)
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (batch, frames):
            raise ShapeError(f"key mask {key_mask.shape} inconsistent with keys ({batch}, {frames})")
        mask = mask & key_mask[:, None, None, :]
    if causal:
        offset = frames - length
        mask = mask & np.tril(np.ones((length, frames), dtype=bool), k=offset)[None, None]

    q = params.split_heads(ops.matmul(Q, params.w_q) + params.b_q)
    scores = ops.scale(ops.matmul(q, ops.swapaxes(k, -1, -2)), 1.0 / np.sqrt(params.d_model))
    if relax is not None and training and relax.config.temperature != 1.0:
        scores = ops.scale(scores, 1.0 / relax.config.temperature)
    weights = AttentionWeights(ops.softmax(scores, axis=-1, mask=mask), mask)

    apply_relax = relax is not None and training
    if apply_relax and relax.config.dropout_order == "dropout_then_relax":
        dropped = AttentionWeights(ops.dropout(weights.values, dropout_p, training, rng), mask)
        used = relax_weights(dropped, relax.gamma(), mask).values
        # returned weights stay row-stochastic for diagnostics
        weights = relax_weights(weights, relax.gamma(), mask)
    else:
        if apply_relax:
            weights = relax_weights(weights, relax.gamma(), mask)
        used = ops.dropout(weights.values, dropout_p, training, rng)

    Z = ops.matmul(params.merge_heads(ops.matmul(used, v)), params.w_o) + params.b_o
    return Z, weights


# -- additive (Bahdanau) attention ---------------------------------------------


class BahdanauParams(Module):
    def __init__(self, enc_dim: int, att_dim: int, dec_dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.enc_dim, self.att_dim, self.dec_dim = enc_dim, att_dim, dec_dim
        self.w_q = self.add_param("w_q", xavier_uniform(rng, dec_dim, att_dim, (dec_dim, att_dim)))
        self.w_v = self.add_param("w_v", xavier_uniform(rng, enc_dim, att_dim, (enc_dim, att_dim)))
        self.v = self.add_param("v", xavier_uniform(rng, att_dim, 1, (1, att_dim)))
        self.b = self.add_param("b", np.zeros((1, att_dim)))

    def project_values(self, V: Tensor) -> Tensor:
        if V.shape[-1] != self.enc_dim:
            raise ShapeError(f"encoded input width {V.shape[-1]} != d_e={self.enc_dim}")
        return ops.matmul(V, self.w_v)


def bahdanau_forward(
    Q_l: Tensor,
    V: Tensor,
    params: BahdanauParams,
    relax=None,
    training: bool = False,
    *,
    frame_mask: Optional[np.ndarray] = None,
    value_proj: Optional[Tensor] = None,
) -> Tuple[Tensor, AttentionWeights]:
    """One decoding step of additive attention.

    Q_l: [B, d_d] query from the first decoder block, V: [B, T, d_e] encoded
    input. Returns the context z_l: [B, d_e] and weights g_l ([B, 1, 1, T]).
    """
    relax = _as_relaxation(relax)
    if Q_l.ndim != 2 or Q_l.shape[-1] != params.dec_dim:
        raise ShapeError(f"query shape {Q_l.shape} does not match d_d={params.dec_dim}")
    if V.ndim != 3 or V.shape[-1] != params.enc_dim or V.shape[0] != Q_l.shape[0]:
        raise ShapeError(f"encoded input shape {V.shape} does not match d_e={params.enc_dim}")
    batch, frames = V.shape[0], V.shape[1]
    if value_proj is None:
        value_proj = params.project_values(V)
    elif value_proj.shape != (batch, frames, params.att_dim):
        raise ShapeError(f"value projection {value_proj.shape} does not match d_a={params.att_dim}")

    query = ops.reshape(ops.matmul(Q_l, params.w_q) + params.b, (batch, 1, params.att_dim))
    energy = ops.tanh(query + value_proj)
    scores = ops.reshape(ops.matmul(energy, ops.transpose(params.v)), (batch, 1, 1, frames))
    if relax is not None and training and relax.config.temperature != 1.0:
        scores = ops.scale(scores, 1.0 / relax.config.temperature)

    mask = np.ones((batch, 1, 1, frames), dtype=bool)
    if frame_mask is not None:
        frame_mask = np.asarray(frame_mask, dtype=bool)
        if frame_mask.shape != (batch, frames):
            raise ShapeError(f"frame mask {frame_mask.shape} inconsistent with ({batch}, {frames})")
        mask = frame_mask[:, None, None, :]
    weights = AttentionWeights(ops.softmax(scores, axis=-1, mask=mask), mask)
    if relax is not None and training:
        weights = relax_weights(weights, relax.gamma(), mask)

    z = ops.matmul(ops.reshape(weights.values, (batch, 1, frames)), V)
    return ops.reshape(z, (batch, params.enc_dim)), weights
