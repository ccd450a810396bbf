from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from raed.models.base import EOS_ID, PAD_ID, shift_right


@dataclass
class Utterance:
    utt_id: str
    features: np.ndarray  # [T~, F], float64 in memory
    tokens: List[int]  # real token ids, EOS not included

    @property
    def frames(self) -> int:
        return int(self.features.shape[0])


@dataclass
class Batch:
    utt_ids: List[str]
    features: np.ndarray  # [B, T~max, F], zero padded
    lengths: np.ndarray  # [B]
    targets: np.ndarray  # [B, Lmax + 1], tokens then EOS, PAD afterwards
    target_mask: np.ndarray  # [B, Lmax + 1], True on tokens and EOS

    @property
    def batch_size(self) -> int:
        return len(self.utt_ids)

    def prev_tokens(self) -> np.ndarray:
        return shift_right(self.targets)

    @classmethod
    def from_utterances(cls, utts: List[Utterance], features: Optional[List[np.ndarray]] = None) -> "Batch":
        feats = features if features is not None else [u.features for u in utts]
        lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
        dim = feats[0].shape[1]
        x = np.zeros((len(utts), int(lengths.max()), dim))
        for i, f in enumerate(feats):
            x[i, : f.shape[0]] = f
        width = max(len(u.tokens) for u in utts) + 1
        targets = np.full((len(utts), width), PAD_ID, dtype=np.int64)
        for i, u in enumerate(utts):
            targets[i, : len(u.tokens)] = u.tokens
            targets[i, len(u.tokens)] = EOS_ID
        return cls([u.utt_id for u in utts], x, lengths, targets, targets != PAD_ID)
