from raed.evaluation.entropy import EntropyReport, attention_entropy, compare_entropy, row_entropy
from raed.evaluation.scoring import (
    EditCounts,
    ScoreReport,
    cer,
    edit_distance_counts,
    read_transcripts,
    score_corpus,
    token_error_rate,
    wer,
)

__all__ = [
    "EditCounts",
    "EntropyReport",
    "ScoreReport",
    "attention_entropy",
    "cer",
    "compare_entropy",
    "edit_distance_counts",
    "read_transcripts",
    "row_entropy",
    "score_corpus",
    "token_error_rate",
    "wer",
]
