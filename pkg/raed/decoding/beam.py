"""Beam search and greedy decoding over any step-wise decoder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, List, Optional, Protocol, Tuple

import numpy as np

from raed.config.schema import FusionConfig
from raed.decoding.fusion import fuse
from raed.decoding.lm import ToyLm
from raed.models.base import BOS_ID, EOS_ID, PAD_ID, EncoderOutput
from raed.tensor import Tensor, no_grad
from raed.utils.errors import DecodingError, ShapeError


class StepDecoder(Protocol):
    def init_state(self, enc: EncoderOutput) -> Any: ...

    def decode_step(self, enc: EncoderOutput, tokens, state: Any) -> Tuple[Tensor, Any]: ...


@dataclass
class Hypothesis:
    tokens: List[int]  # emitted ids; ends with EOS once finished
    score: float  # sum of fused per-step scores of `tokens`
    state: Any = None
    lm_state: Any = None
    finished: bool = False

    def ranking_score(self, normalize_length: bool) -> float:
        if normalize_length and self.tokens:
            return self.score / len(self.tokens)
        return self.score

    def output_tokens(self) -> List[int]:
        return self.tokens[:-1] if self.finished and self.tokens and self.tokens[-1] == EOS_ID else list(self.tokens)


def max_output_length(frames: int, ratio: float) -> int:
    return max(1, int(math.ceil(ratio * frames)))


def _step_scores(
    model: StepDecoder,
    enc: EncoderOutput,
    lm: Optional[ToyLm],
    config: FusionConfig,
    hyp: Hypothesis,
    step: int,
    max_len: int,
) -> Tuple[np.ndarray, Any, Any]:
    prev = hyp.tokens[-1] if hyp.tokens else BOS_ID
    logp, state = model.decode_step(enc, [prev], hyp.state)
    lm_state = None
    if lm is not None:
        lm_logp, lm_state = lm.step([prev], hyp.lm_state)
        scores = fuse(logp.data[0], lm_logp.data[0], config.lm_weight)
    else:
        scores = np.array(logp.data[0], copy=True)
    scores[PAD_ID] = -np.inf
    if step == max_len - 1:
        eos = scores[EOS_ID]
        scores[:] = -np.inf
        scores[EOS_ID] = eos
    elif config.eos_factor is not None:
        others = np.delete(scores, [PAD_ID, EOS_ID])
        if others.size and scores[EOS_ID] < config.eos_factor * others.max():
            scores[EOS_ID] = -np.inf
    return scores, state, lm_state


def beam_search(
    model: StepDecoder,
    enc: EncoderOutput,
    lm: Optional[ToyLm] = None,
    config: Optional[FusionConfig] = None,
    *,
    max_len: Optional[int] = None,
) -> List[Hypothesis]:
    """Finished hypotheses for a single utterance, best first.

    Every live hypothesis is expanded over all tokens (PAD excluded) with fused
    scores; the best `beam` candidates survive, ties broken by hypothesis
    index and then token id. A candidate ending in EOS moves to the finished
    pool. At the length limit only EOS may be emitted.
    """
    config = config or FusionConfig()
    if not 1 <= config.beam <= config.max_beam:
        raise DecodingError(f"beam {config.beam} outside [1, {config.max_beam}]")
    if enc.batch_size != 1:
        raise ShapeError(f"beam search decodes one utterance at a time, got batch {enc.batch_size}")
    frames = int(enc.lengths[0])
    if frames == 0 or enc.h.shape[1] == 0:
        raise DecodingError("empty encoder output")
    if lm is not None and not config.use_lm:
        lm = None
    max_len = max_len if max_len is not None else max_output_length(frames, config.max_len_ratio)

    live = [Hypothesis([], 0.0, model.init_state(enc), lm.init_state(1) if lm is not None else None)]
    finished: List[Hypothesis] = []
    with no_grad():
        for step in range(max_len):
            candidates = []
            expanded = []
            for hi, hyp in enumerate(live):
                scores, state, lm_state = _step_scores(model, enc, lm, config, hyp, step, max_len)
                expanded.append((state, lm_state))
                for tok in np.flatnonzero(np.isfinite(scores)):
                    candidates.append((hyp.score + scores[tok], hi, int(tok)))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
            survivors = []
            for score, hi, tok in candidates[: config.beam]:
                state, lm_state = expanded[hi]
                child = Hypothesis(live[hi].tokens + [tok], float(score), state, lm_state, finished=tok == EOS_ID)
                (finished if child.finished else survivors).append(child)
            live = survivors
            if not live:
                break
    # sort is stable, so equal scores keep the order in which they finished
    finished.sort(key=lambda h: -h.ranking_score(config.normalize_length))
    return finished


def greedy_decode(
    model: StepDecoder,
    enc: EncoderOutput,
    max_len_ratio: float = 1.0,
) -> List[List[int]]:
    """Argmax decoding for a whole batch; each result ends with EOS.

    Follows the same rules as `beam_search` with beam 1 and no LM: PAD is
    never emitted and the last allowed step forces EOS.
    """
    batch = enc.batch_size
    limits = np.array([max_output_length(int(n), max_len_ratio) for n in enc.lengths])
    out: List[List[int]] = [[] for _ in range(batch)]
    done = np.zeros(batch, dtype=bool)
    prev = np.full(batch, BOS_ID, dtype=np.int64)
    with no_grad():
        state = model.init_state(enc)
        for step in range(int(limits.max())):
            logp, state = model.decode_step(enc, prev, state)
            scores = np.array(logp.data, copy=True)
            scores[:, PAD_ID] = -np.inf
            forced = limits - 1 == step
            scores[forced, :EOS_ID] = -np.inf
            scores[forced, EOS_ID + 1 :] = -np.inf
            tokens = scores.argmax(axis=1)
            for b in np.flatnonzero(~done):
                out[b].append(int(tokens[b]))
            done |= tokens == EOS_ID
            if done.all():
                break
            prev = np.where(done, EOS_ID, tokens)
    return out


def strip_eos(tokens: List[int]) -> List[int]:
    return tokens[: tokens.index(EOS_ID)] if EOS_ID in tokens else list(tokens)
