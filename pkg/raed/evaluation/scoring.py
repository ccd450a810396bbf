from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, List, Sequence, Union

from raed.utils.errors import ScoringError

PathLike = Union[str, Path]


@dataclass(frozen=True)
class EditCounts:
    n: int = 0  # reference units
    deletions: int = 0
    insertions: int = 0
    substitutions: int = 0

    @property
    def errors(self) -> int:
        return self.deletions + self.insertions + self.substitutions

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.n + other.n,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.substitutions + other.substitutions,
        )


def edit_distance_counts(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> EditCounts:
    """Levenshtein alignment; among minimal scripts, substitution is preferred
    over deletion, deletion over insertion."""
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i][j] = min(diag, cost[i - 1][j] + 1, cost[i][j - 1] + 1)

    d = ins = sub = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i][j]
        if i > 0 and j > 0 and cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]) == here:
            sub += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and cost[i - 1][j] + 1 == here:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(n, d, ins, sub)


def wer(counts: EditCounts) -> float:
    """(D + I + S) / N, i.e. 1 - (N - D - I - S) / N; may exceed 1."""
    if counts.n == 0:
        raise ScoringError("error rate undefined for an empty reference")
    return counts.errors / counts.n


# the same ratio computed over character counts
cer = wer


def word_counts(ref_text: str, hyp_text: str) -> EditCounts:
    return edit_distance_counts(ref_text.split(), hyp_text.split())


def char_counts(ref_text: str, hyp_text: str) -> EditCounts:
    """Characters of the transcript, word-separating spaces included."""
    return edit_distance_counts(list(ref_text.strip()), list(hyp_text.strip()))


def token_error_rate(refs: Sequence[Sequence[int]], hyps: Sequence[Sequence[int]]) -> float:
    total = EditCounts()
    for r, h in zip(refs, hyps):
        total = total + edit_distance_counts(list(r), list(h))
    return wer(total)


@dataclass
class UtteranceScore:
    utt_id: str
    words: EditCounts
    chars: EditCounts


@dataclass
class ScoreReport:
    utterances: List[UtteranceScore] = field(default_factory=list)
    words: EditCounts = field(default_factory=EditCounts)
    chars: EditCounts = field(default_factory=EditCounts)

    @property
    def wer(self) -> float:
        return wer(self.words)

    @property
    def cer(self) -> float:
        return cer(self.chars)


def read_transcripts(path: PathLike) -> Dict[str, str]:
    """`<utt_id> <transcript>` per line; the transcript may be empty."""
    p = Path(path)
    if not p.is_file():
        raise ScoringError(f"transcript file not found: {p}")
    out: Dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(" ", 1)
        utt_id = parts[0]
        if utt_id in out:
            raise ScoringError(f"{p}:{lineno}: duplicate utterance id {utt_id}")
        out[utt_id] = parts[1] if len(parts) > 1 else ""
    return out


def score_corpus(refs: Dict[str, str], hyps: Dict[str, str]) -> ScoreReport:
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing or extra:
        raise ScoringError(f"utterance sets differ: missing={missing[:3]} extra={extra[:3]}")
    report = ScoreReport()
    for utt_id in refs:
        w = word_counts(refs[utt_id], hyps[utt_id])
        c = char_counts(refs[utt_id], hyps[utt_id])
        report.utterances.append(UtteranceScore(utt_id, w, c))
        report.words = report.words + w
        report.chars = report.chars + c
    return report
