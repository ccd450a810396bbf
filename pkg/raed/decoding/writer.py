from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Tuple, Union

PathLike = Union[str, Path]


@dataclass
class DecodedUtterance:
    utt_id: str
    tokens: List[int]  # EOS stripped
    text: str
    score: float
    nbest: List[Tuple[str, float]] = field(default_factory=list)


def write_decodes(path: PathLike, results: Iterable[DecodedUtterance]) -> None:
    """One JSON record per line, in corpus order."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for r in results:
            record = asdict(r)
            record["nbest"] = [{"text": t, "score": s} for t, s in r.nbest]
            fh.write(json.dumps(record) + "\n")


def write_hypotheses(path: PathLike, results: Iterable[DecodedUtterance]) -> None:
    """`<utt_id> <text>` lines, the format `score` reads."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(f"{r.utt_id} {r.text}\n")
