from __future__ import annotations

import numpy as np

from raed.tensor import Tensor
from raed.utils.errors import ConfigError, NumericalError, ShapeError


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def fuse(log_p, log_p_lm, lm_weight: float) -> np.ndarray:
    """Shallow fusion: log P + lm_weight * log P_lm, left unnormalised."""
    a, b = _array(log_p), _array(log_p_lm)
    if lm_weight < 0:
        raise ConfigError(f"LM weight must be non-negative, got {lm_weight}")
    if a.shape != b.shape:
        raise ShapeError(f"fusion inputs differ in shape: {a.shape} vs {b.shape}")
    if np.isnan(a).any() or np.isnan(b).any():
        raise NumericalError("NaN in fusion inputs")
    return a + lm_weight * b
