from __future__ import annotations

from typing import Callable, Iterator, List, Optional, Sequence

import numpy as np

from raed.data.records import Batch, Utterance

FeatureTransform = Callable[[np.ndarray], np.ndarray]


def iter_batches(
    utts: Sequence[Utterance],
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
    transform: Optional[FeatureTransform] = None,
) -> Iterator[Batch]:
    """Batches in corpus order, or shuffled when `rng` is given.

    `transform` is applied per utterance before padding (spec-augment).
    """
    order = rng.permutation(len(utts)) if rng is not None else np.arange(len(utts))
    for start in range(0, len(order), batch_size):
        chunk: List[Utterance] = [utts[i] for i in order[start : start + batch_size]]
        feats = [transform(u.features) for u in chunk] if transform is not None else None
        yield Batch.from_utterances(chunk, feats)
