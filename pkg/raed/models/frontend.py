from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from raed.config.schema import FrontendConfig
from raed.models.layers import Conv2d, Linear, Module
from raed.tensor import Tensor, ops
from raed.utils.errors import ShapeError


def frame_mask(lengths: np.ndarray, frames: int) -> np.ndarray:
    """[B, frames] boolean mask, True on frames below each length."""
    return np.arange(frames)[None, :] < np.asarray(lengths)[:, None]


def subsampled_lengths(lengths: np.ndarray, strides) -> np.ndarray:
    out = np.asarray(lengths, dtype=np.int64)
    for s in strides:
        out = -(-out // s)
    return out


class Frontend(Module):
    """Four 3x3 conv layers (strides 1,2,1,2 in time and frequency) followed by a
    linear map of the flattened channels x reduced-frequency axis to `out_dim`.

    Sequence length shrinks to ceil(T~ / 4). Frames beyond each utterance's
    length are zeroed before and after every conv layer so that padding never
    leaks into valid frames.
    """

    def __init__(self, config: FrontendConfig, out_dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.out_dim = out_dim
        self.convs = []
        in_ch = 1
        for i, (ch, stride) in enumerate(zip(config.channels, config.strides)):
            self.convs.append(self.add_module(f"conv{i}", Conv2d(in_ch, ch, config.kernel_size, stride, rng)))
            in_ch = ch
        self.proj = self.add_module("proj", Linear(in_ch * config.reduced_feature_dim(), out_dim, rng))

    def __call__(self, x: Tensor, lengths: Optional[np.ndarray] = None) -> Tuple[Tensor, np.ndarray]:
        """x: [B, T~, F] (or [T~, F]) -> ([B, T, out_dim], subsampled lengths)."""
        if x.ndim == 2:
            x = ops.reshape(x, (1,) + x.shape)
        batch, frames, feats = x.shape
        if feats != self.config.feature_dim:
            raise ShapeError(f"feature dim {feats} != configured {self.config.feature_dim}")
        if lengths is None:
            lengths = np.full(batch, frames, dtype=np.int64)
        lengths = np.asarray(lengths, dtype=np.int64)
        if frames < 4 or np.any(lengths < 4):
            raise ShapeError(f"input needs at least 4 frames, got {int(min(frames, lengths.min()))}")

        h = ops.reshape(x * frame_mask(lengths, frames)[:, :, None], (batch, 1, frames, feats))
        cur = lengths
        for conv in self.convs:
            h = ops.relu(conv(h))
            cur = subsampled_lengths(cur, [conv.stride])
            h = h * frame_mask(cur, h.shape[2])[:, None, :, None]
        b, c, t, f = h.shape
        h = ops.reshape(ops.transpose(h, (0, 2, 1, 3)), (b, t, c * f))
        return self.proj(h), cur


def frontend_forward(x: Tensor, frontend: Frontend) -> Tensor:
    """Unbatched convenience: [T~, F] -> [ceil(T~/4), d]."""
    out, _ = frontend(x)
    return ops.reshape(out, out.shape[1:])
