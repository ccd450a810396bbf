"""Console logging for every command, plus a per-run log file while training."""

from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from raed.utils.errors import ConfigError

FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def resolve_level(level: str) -> int:
    name = level.strip().upper()
    if name not in LEVELS:
        raise ConfigError(f"log level must be one of {', '.join(LEVELS)}, got {level!r}")
    return getattr(logging, name)


def init_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=resolve_level(level), format=FORMAT, stream=sys.stdout, force=True)


@contextmanager
def run_log(path: Path) -> Iterator[Path]:
    """Append every `raed.*` record to `path` while the block runs."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter(FORMAT))
    package = logging.getLogger("raed")
    package.addHandler(handler)
    try:
        yield path
    finally:
        package.removeHandler(handler)
        handler.close()


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
