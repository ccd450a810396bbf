from __future__ import annotations

from typing import Optional

import numpy as np

from raed.tensor import Tensor, ops
from raed.utils.errors import ConfigError, ShapeError, VocabularyError


def smoothed_cross_entropy(
    log_probs: Tensor,
    targets,
    epsilon: float,
    pad_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean over non-pad positions of -sum_c q(c) log P(c), with
    q = (1 - epsilon) * onehot(target) + epsilon / D.

    `log_probs` is [..., D]; `pad_mask` is True on positions that count.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ConfigError(f"label smoothing must lie in [0, 1), got {epsilon}")
    targets = np.asarray(targets, dtype=np.int64)
    vocab = log_probs.shape[-1]
    if targets.shape != log_probs.shape[:-1]:
        raise ShapeError(f"targets {targets.shape} do not match log-probs {log_probs.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise VocabularyError(f"target id outside vocabulary of size {vocab}")
    keep = np.ones(targets.shape, dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    count = int(keep.sum())
    if count == 0:
        raise ShapeError("no non-pad positions to average over")

    q = np.full(log_probs.shape, epsilon / vocab)
    np.put_along_axis(q, targets[..., None], 1.0 - epsilon + epsilon / vocab, axis=-1)
    q = q * keep[..., None]
    return ops.scale(ops.sum(ops.mul(log_probs, q)), -1.0 / count)
