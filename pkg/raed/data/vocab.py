from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from raed.models.base import EOS_ID, PAD_ID
from raed.utils.errors import VocabularyError

PAD = "<pad>"
EOS = "<eos>"
WORD_BOUNDARY = "_"


@dataclass
class Vocabulary:
    """Closed token inventory: `<pad>`, `<eos>`, then the real tokens.

    The first real token is the word boundary `_`, rendered as a space in
    transcripts, so words and characters of a transcript are well defined.
    """

    tokens: List[str]
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens[:3] != [PAD, EOS, WORD_BOUNDARY]:
            raise VocabularyError("vocabulary must start with <pad>, <eos>, _")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabularyError("duplicate tokens in vocabulary")
        if any(len(t) != 1 for t in self.tokens[3:]):
            raise VocabularyError("real tokens must be single characters")
        self._index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def toy(cls, real_tokens: int) -> "Vocabulary":
        letters = string.ascii_lowercase + string.digits
        if not 2 <= real_tokens <= len(letters) + 1:
            raise VocabularyError(f"toy vocabulary supports 2..{len(letters) + 1} real tokens")
        return cls([PAD, EOS, WORD_BOUNDARY] + list(letters[: real_tokens - 1]))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def boundary_id(self) -> int:
        return 2

    def real_ids(self) -> List[int]:
        return list(range(2, len(self.tokens)))

    def to_text(self, ids: Sequence[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == EOS_ID:
                break
            if i == PAD_ID:
                continue
            if not 0 <= i < len(self.tokens):
                raise VocabularyError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(" " if i == self.boundary_id else self.tokens[i])
        return "".join(out)

    def from_text(self, text: str) -> List[int]:
        ids = []
        for ch in text:
            key = WORD_BOUNDARY if ch == " " else ch
            if key not in self._index or self._index[key] < 2:
                raise VocabularyError(f"unknown token {ch!r}")
            ids.append(self._index[key])
        return ids
