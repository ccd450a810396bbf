from __future__ import annotations

import hashlib


class RaedError(Exception):
    """Base error; `category` is the machine-parsable tag printed by the CLI."""

    category = "internal"
    exit_code = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class ShapeError(RaedError, ValueError):
    category = "shape_mismatch"


class ConfigError(RaedError, ValueError):
    category = "config"
    exit_code = 2


class VocabularyError(RaedError, ValueError):
    category = "vocabulary"


class NumericalError(RaedError, ArithmeticError):
    category = "numerical"


class FormatError(RaedError):
    category = "format"


class DataError(RaedError):
    category = "data"


class DecodingError(RaedError, ValueError):
    category = "decoding"


class ScoringError(RaedError, ValueError):
    category = "scoring"


class TrainingError(RaedError):
    category = "training"


def error_id(exc: BaseException) -> str:
    """Short stable id for an exception, used to correlate CLI output and logs."""
    return hashlib.sha256(repr(exc).encode("utf-8")).hexdigest()[:16]
