from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from raed.data.features import FeatureReader
from raed.data.records import Utterance
from raed.data.vocab import Vocabulary
from raed.utils.errors import DataError, FormatError
from raed.utils.logging import get_logger

log = get_logger(__name__)

PathLike = Union[str, Path]


class UtteranceRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    utt_id: str
    offset: int = Field(ge=0)
    frames: int = Field(ge=1)
    tokens: List[int]


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: Literal[1] = 1
    split: str
    features: str  # RAFX file, relative to the manifest
    feature_dim: int = Field(ge=1)
    vocab: List[str]
    utterances: List[UtteranceRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "DatasetManifest":
        size = len(self.vocab)
        end = 0
        for rec in sorted(self.utterances, key=lambda r: r.offset):
            if rec.offset < end:
                raise ValueError(f"{rec.utt_id}: feature block overlaps the previous utterance")
            end = rec.offset + 4 + rec.frames * self.feature_dim * 4
            if any(not 2 <= t < size for t in rec.tokens):
                raise ValueError(f"{rec.utt_id}: token id outside [2, {size})")
        ids = [r.utt_id for r in self.utterances]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate utterance ids")
        return self


def write_manifest(path: PathLike, manifest: DatasetManifest) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(manifest.model_dump_json(indent=1), encoding="utf-8")


def read_manifest(path: PathLike) -> DatasetManifest:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"manifest not found: {p}")
    try:
        return DatasetManifest.model_validate_json(p.read_text(encoding="utf-8"))
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(x) for x in first["loc"]) or "<root>"
        raise FormatError(f"{p}: {where}: {first['msg']}") from e


def load_split(path: PathLike) -> Tuple[List[Utterance], Vocabulary, DatasetManifest]:
    """Manifest plus its features, fully materialised in memory."""
    manifest = read_manifest(path)
    reader = FeatureReader(Path(path).parent / manifest.features)
    if reader.feature_dim != manifest.feature_dim:
        raise DataError(f"feature dim {reader.feature_dim} != manifest {manifest.feature_dim}")
    utts = [
        Utterance(rec.utt_id, reader.read(rec.offset, rec.frames), list(rec.tokens))
        for rec in manifest.utterances
    ]
    log.debug("loaded split=%s utterances=%d", manifest.split, len(utts))
    return utts, Vocabulary(manifest.vocab), manifest
