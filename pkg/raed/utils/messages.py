from __future__ import annotations

from pathlib import Path
from typing import Dict

from raed.utils.logging import get_logger

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib  # type: ignore

log = get_logger(__name__)

_MESSAGES: Dict[str, str] = {}


def init_messages() -> None:
    """Load the error-category catalog shipped next to this module."""
    path = Path(__file__).resolve().parent / "messages.toml"
    data = tomllib.loads(path.read_text(encoding="utf-8"))
    _MESSAGES.clear()
    _MESSAGES.update({str(k): str(v) for k, v in data.items()})
    if "internal" not in _MESSAGES:
        raise RuntimeError("missing base message: internal")
    log.debug("messages: loaded %d categories", len(_MESSAGES))


def describe(category: str) -> str:
    if not _MESSAGES:
        init_messages()
    return _MESSAGES.get(category) or _MESSAGES["internal"]
