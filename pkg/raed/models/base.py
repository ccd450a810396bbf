from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from raed.models.layers import Module
from raed.tensor import Tensor
from raed.utils.errors import VocabularyError

PAD_ID = 0
EOS_ID = 1
# the begin-of-sequence input is the EOS symbol
BOS_ID = EOS_ID


@dataclass
class EncoderOutput:
    h: Tensor  # [B, T, d]
    frame_mask: np.ndarray  # [B, T], True on valid frames
    lengths: np.ndarray  # [B]

    @property
    def batch_size(self) -> int:
        return self.h.shape[0]

    def select(self, index: int) -> "EncoderOutput":
        """Single-utterance view trimmed to its valid frames."""
        n = int(self.lengths[index])
        return EncoderOutput(
            self.h[index : index + 1, :n],
            np.ones((1, n), dtype=bool),
            np.array([n], dtype=np.int64),
        )


class AedModel(Module):
    """Common surface of the transformer and LAS encoder-decoders.

    Decoders emit log-probabilities; `decode_all` runs teacher forcing over
    all positions at once and `decode_step` advances one position from an
    explicit state, so independent decoding threads can share one model.
    """

    arch: str = ""

    def __init__(self, vocab_size: int) -> None:
        super().__init__()
        self.vocab_size = vocab_size

    def check_tokens(self, tokens) -> np.ndarray:
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            bad = int(ids[(ids < 0) | (ids >= self.vocab_size)][0])
            raise VocabularyError(f"token id {bad} outside vocabulary of size {self.vocab_size}")
        return ids

    def encode(
        self,
        x: Tensor,
        lengths: Optional[np.ndarray] = None,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> EncoderOutput:
        raise NotImplementedError

    def decode_all(
        self,
        enc: EncoderOutput,
        prev_tokens,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        raise NotImplementedError

    def init_state(self, enc: EncoderOutput) -> Any:
        raise NotImplementedError

    def decode_step(self, enc: EncoderOutput, tokens, state: Any) -> Tuple[Tensor, Any]:
        raise NotImplementedError

    def learned_gammas(self) -> Dict[str, float]:
        """Current value of every learned relaxation coefficient, by block."""
        return {}

    def forward(
        self,
        x: Tensor,
        lengths: Optional[np.ndarray],
        prev_tokens,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        enc = self.encode(x, lengths, training, rng)
        return self.decode_all(enc, prev_tokens, training, rng)


def shift_right(targets: np.ndarray) -> np.ndarray:
    """Teacher-forcing inputs: begin token followed by targets[:, :-1]."""
    targets = np.asarray(targets, dtype=np.int64)
    prev = np.empty_like(targets)
    prev[:, 0] = BOS_ID
    prev[:, 1:] = targets[:, :-1]
    return prev
