"""Shannon entropy (nats) of encoder-decoder attention rows."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.special import entr

from raed.models.attention import AttentionWeights
from raed.utils.errors import ScoringError

ROW_TOLERANCE = 1e-6


@dataclass
class EntropyStats:
    rows: np.ndarray  # entropy per row, flattened over leading axes
    mean: float


def row_entropy(values: np.ndarray, valid: Optional[np.ndarray] = None) -> np.ndarray:
    """H(row) = -sum_t g_t ln g_t over valid frames, 0 ln 0 = 0."""
    values = np.asarray(values, dtype=np.float64)
    valid = np.ones(values.shape, dtype=bool) if valid is None else np.broadcast_to(valid, values.shape)
    if np.any(values < -ROW_TOLERANCE) or np.any(np.abs(values[~valid]) > ROW_TOLERANCE):
        raise ScoringError("attention rows must be non-negative and zero on invalid frames")
    sums = np.where(valid, values, 0.0).sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_TOLERANCE):
        raise ScoringError(f"attention row sums deviate from 1 by up to {np.abs(sums - 1.0).max():.2e}")
    return np.where(valid, entr(np.clip(values, 0.0, None)), 0.0).sum(axis=-1)


def attention_entropy(weights: Union[AttentionWeights, np.ndarray], valid: Optional[np.ndarray] = None) -> EntropyStats:
    if isinstance(weights, AttentionWeights):
        values, valid = weights.values.data, weights.valid_mask()
    else:
        values = weights
    rows = row_entropy(values, valid).reshape(-1)
    return EntropyStats(rows, float(rows.mean()) if rows.size else 0.0)


def parse_dump_name(name: str) -> Tuple[str, int, str]:
    """`attn/<layer>/<head>/<utt>` -> (layer, head, utt)."""
    parts = name.split("/", 3)
    if len(parts) != 4 or parts[0] != "attn":
        raise ScoringError(f"not an attention dump entry: {name}")
    return parts[1], int(parts[2]), parts[3]


@dataclass
class _Pool:
    total: float = 0.0
    rows: int = 0

    def add(self, rows: np.ndarray) -> None:
        self.total += float(rows.sum())
        self.rows += rows.size

    @property
    def mean(self) -> float:
        return self.total / self.rows if self.rows else 0.0


def _pool_dump(dump: Mapping[str, np.ndarray]):
    overall = _Pool()
    per_utt: Dict[str, _Pool] = defaultdict(_Pool)
    per_head: Dict[Tuple[str, int], _Pool] = defaultdict(_Pool)
    for name in sorted(dump):
        layer, head, utt = parse_dump_name(name)
        rows = row_entropy(dump[name])
        overall.add(rows)
        per_utt[utt].add(rows)
        per_head[(layer, head)].add(rows)
    return overall, per_utt, per_head


@dataclass
class EntropyReport:
    baseline_mean: float
    relaxed_mean: float
    ratio: float  # relaxed / baseline - 1
    rows: int
    per_utterance: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    per_head: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def percent(self) -> float:
        return 100.0 * self.ratio


def compare_entropy(baseline: Mapping[str, np.ndarray], relaxed: Mapping[str, np.ndarray]) -> EntropyReport:
    """Entropy of two attention dumps over the same utterances.

    Means pool every row with equal weight (all layers, heads, steps and
    utterances), per model.
    """
    b_all, b_utt, b_head = _pool_dump(baseline)
    r_all, r_utt, r_head = _pool_dump(relaxed)
    if set(b_utt) != set(r_utt):
        diff: List[str] = sorted(set(b_utt) ^ set(r_utt))
        raise ScoringError(f"dumps cover different utterances, e.g. {diff[:3]}")
    if b_all.rows == 0:
        raise ScoringError("baseline dump is empty")
    if b_all.mean == 0.0:
        raise ScoringError("baseline entropy is zero; ratio undefined")
    return EntropyReport(
        baseline_mean=b_all.mean,
        relaxed_mean=r_all.mean,
        ratio=r_all.mean / b_all.mean - 1.0,
        rows=b_all.rows,
        per_utterance={u: (b_utt[u].mean, r_utt[u].mean) for u in sorted(b_utt)},
        per_head={
            f"{layer}/{head}": (b_head[(layer, head)].mean, r_head[(layer, head)].mean if (layer, head) in r_head else float("nan"))
            for layer, head in sorted(b_head)
        },
    )
