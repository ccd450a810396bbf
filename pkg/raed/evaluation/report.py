from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from raed.evaluation.entropy import EntropyReport
from raed.evaluation.scoring import EditCounts, ScoreReport

PathLike = Union[str, Path]


def _rate(c: EditCounts) -> str:
    return f"{100.0 * c.errors / c.n:.2f}" if c.n else "n/a"


def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [list(map(str, header))] + [[str(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_score_report(report: ScoreReport, per_utterance: bool = True) -> str:
    header = ["utt", "N_w", "D", "I", "S", "WER%", "N_c", "D", "I", "S", "CER%"]

    def row(name: str, w: EditCounts, c: EditCounts) -> List[Any]:
        return [name, w.n, w.deletions, w.insertions, w.substitutions, _rate(w),
                c.n, c.deletions, c.insertions, c.substitutions, _rate(c)]

    rows = [row(u.utt_id, u.words, u.chars) for u in report.utterances] if per_utterance else []
    rows.append(row("TOTAL", report.words, report.chars))
    return format_table(header, rows)


def score_report_dict(report: ScoreReport) -> Dict[str, Any]:
    def counts(c: EditCounts) -> Dict[str, int]:
        return {"N": c.n, "D": c.deletions, "I": c.insertions, "S": c.substitutions}

    return {
        "wer": report.wer if report.words.n else None,
        "cer": report.cer if report.chars.n else None,
        "words": counts(report.words),
        "chars": counts(report.chars),
        "utterances": [
            {"utt_id": u.utt_id, "words": counts(u.words), "chars": counts(u.chars)} for u in report.utterances
        ],
    }


def format_entropy_report(report: EntropyReport) -> str:
    head_rows = [[name, f"{b:.4f}", f"{r:.4f}"] for name, (b, r) in report.per_head.items()]
    summary = [["ALL", f"{report.baseline_mean:.4f}", f"{report.relaxed_mean:.4f}"]]
    return "\n".join(
        [
            format_table(["layer/head", "H_baseline", "H_relaxed"], head_rows + summary),
            f"entropy ratio (relaxed / baseline - 1): {report.percent:+.2f}% over {report.rows} rows",
        ]
    )


def entropy_report_dict(report: EntropyReport) -> Dict[str, Any]:
    return {
        "baseline_mean": report.baseline_mean,
        "relaxed_mean": report.relaxed_mean,
        "ratio": report.ratio,
        "rows": report.rows,
        "per_head": {k: {"baseline": b, "relaxed": r} for k, (b, r) in report.per_head.items()},
        "per_utterance": {k: {"baseline": b, "relaxed": r} for k, (b, r) in report.per_utterance.items()},
    }


def write_json(path: PathLike, payload: Dict[str, Any]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
