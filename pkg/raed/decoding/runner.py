from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from raed.config.schema import FusionConfig
from raed.data.records import Utterance
from raed.data.vocab import Vocabulary
from raed.decoding.beam import beam_search
from raed.decoding.lm import ToyLm
from raed.decoding.writer import DecodedUtterance
from raed.models.attention import capture_attention
from raed.models.base import EOS_ID, AedModel, shift_right
from raed.tensor import Tensor, no_grad
from raed.utils.concurrency import run_parallel
from raed.utils.logging import get_logger
from raed.utils.metrics import DECODED_UTTERANCES

log = get_logger(__name__)


@dataclass
class DecodeOutput:
    result: DecodedUtterance
    attention: Dict[str, np.ndarray] = field(default_factory=dict)


def attention_dump_name(layer: str, head: int, utt_id: str) -> str:
    return f"attn/{layer}/{head}/{utt_id}"


def teacher_forced_attention(model: AedModel, enc, tokens: List[int], utt_id: str) -> Dict[str, np.ndarray]:
    """Encoder-decoder weights ([L, T] per layer and head) for a forced token
    sequence; `enc` holds one utterance trimmed to its valid frames."""
    targets = np.array([list(tokens) + [EOS_ID]], dtype=np.int64)
    with no_grad(), capture_attention(("cross",)) as recorder:
        model.decode_all(enc, shift_right(targets))
    out = {}
    for rec in recorder.records:
        for head in range(rec.values.shape[1]):
            out[attention_dump_name(rec.layer, head, utt_id)] = rec.values[0, head]
    return out


def decode_utterance(
    model: AedModel,
    utt: Utterance,
    vocab: Vocabulary,
    lm: Optional[ToyLm],
    config: FusionConfig,
    dump_attention: bool = False,
) -> DecodeOutput:
    with no_grad():
        enc = model.encode(Tensor(utt.features[None]), np.array([utt.frames]))
        hyps = beam_search(model, enc, lm, config)
    best = hyps[0]
    tokens = best.output_tokens()
    result = DecodedUtterance(
        utt_id=utt.utt_id,
        tokens=tokens,
        text=vocab.to_text(tokens),
        score=best.score,
        nbest=[(vocab.to_text(h.output_tokens()), h.score) for h in hyps[: config.nbest]],
    )
    attention = teacher_forced_attention(model, enc, tokens, utt.utt_id) if dump_attention else {}
    DECODED_UTTERANCES.inc()
    return DecodeOutput(result, attention)


def decode_corpus(
    model: AedModel,
    utts: Sequence[Utterance],
    vocab: Vocabulary,
    lm: Optional[ToyLm],
    config: FusionConfig,
    *,
    workers: int = 1,
    dump_attention: bool = False,
) -> List[DecodeOutput]:
    """Decode every utterance; with `workers` > 1 utterances run on a thread
    pool, each with its own decoder state. Output order follows `utts`."""
    log.info(
        "decoding utterances=%d beam=%d lm=%s lm_weight=%.3f workers=%d",
        len(utts), config.beam, lm is not None and config.use_lm, config.lm_weight, workers,
    )
    return run_parallel(
        lambda u: decode_utterance(model, u, vocab, lm, config, dump_attention), list(utts), workers
    )
