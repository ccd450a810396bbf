from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from raed.utils.errors import ConfigError

Span = Tuple[int, int]  # (start, width)


def sample_mask_spans(axis_len: int, count: int, max_width: int, rng: np.random.Generator) -> List[Span]:
    """`count` stripes with width uniform in [0, max_width] and a uniform start."""
    if max_width >= axis_len:
        raise ConfigError(f"mask width {max_width} must be smaller than the axis length {axis_len}")
    spans = []
    for _ in range(count):
        width = int(rng.integers(0, max_width + 1))
        start = int(rng.integers(0, axis_len - width + 1))
        spans.append((start, width))
    return spans


def apply_masks(x: np.ndarray, time_spans: Sequence[Span], freq_spans: Sequence[Span]) -> np.ndarray:
    out = np.array(x, dtype=np.float64, copy=True)
    for start, width in time_spans:
        out[start : start + width, :] = 0.0
    for start, width in freq_spans:
        out[:, start : start + width] = 0.0
    return out


def spec_augment(
    x: np.ndarray,
    time_masks: int,
    time_width: int,
    freq_masks: int,
    freq_width: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Zero random time and frequency stripes of a [T~, F] feature matrix."""
    frames, dims = x.shape
    time_spans = sample_mask_spans(frames, time_masks, time_width, rng) if time_masks else []
    freq_spans = sample_mask_spans(dims, freq_masks, freq_width, rng) if freq_masks else []
    return apply_masks(x, time_spans, freq_spans)
