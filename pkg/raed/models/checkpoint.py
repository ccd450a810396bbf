"""Tensor container used for checkpoints, optimizer state and attention dumps.

Layout (little-endian):

    b"RAED" | u32 version | u32 count
    count x ( u16 name_len | name (utf-8) | u8 rank | rank x u64 dim | float64 payload )
    u64 crc32 of every byte between the header and this trailer

The model config travels next to the checkpoint as a JSON sidecar
(`<file>.json`) so a checkpoint can be rebuilt without the experiment file.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union

import numpy as np
from pydantic import ValidationError

from raed.config.schema import ModelConfig
from raed.models.base import AedModel
from raed.models.registry import build_model
from raed.utils.errors import FormatError
from raed.utils.logging import get_logger

log = get_logger(__name__)

MAGIC = b"RAED"
VERSION = 1
_HEADER = struct.Struct("<4sII")

PathLike = Union[str, Path]


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    body = bytearray()
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(value, dtype="<f8")
        body += struct.pack("<H", len(raw)) + raw
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        body += arr.tobytes(order="C")
    header = _HEADER.pack(MAGIC, VERSION, len(tensors))
    return header + bytes(body) + struct.pack("<Q", zlib.crc32(body))


def decode_tensors(blob: bytes) -> Dict[str, np.ndarray]:
    if len(blob) < _HEADER.size + 8:
        raise FormatError("truncated container")
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    body = memoryview(blob)[_HEADER.size : len(blob) - 8]
    (crc,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch")

    out: Dict[str, np.ndarray] = {}
    pos = 0
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = bytes(body[pos : pos + n]).decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            size = int(np.prod(shape, dtype=np.int64)) * 8
            if pos + size > len(body):
                raise FormatError(f"{name}: payload runs past the end of the container")
            out[name] = np.frombuffer(body[pos : pos + size], dtype="<f8").reshape(shape).astype(np.float64)
            pos += size
    except (struct.error, UnicodeDecodeError) as e:
        raise FormatError(f"corrupt container: {e}") from e
    if pos != len(body):
        raise FormatError(f"{len(body) - pos} trailing bytes after {count} tensors")
    return out


def write_tensors(path: PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_bytes(encode_tensors(tensors))
    tmp.replace(p)


def read_tensors(path: PathLike) -> Dict[str, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"container not found: {p}")
    return decode_tensors(p.read_bytes())


def sidecar_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def save_checkpoint(path: PathLike, model: AedModel, config: ModelConfig) -> None:
    write_tensors(path, model.state_dict())
    sidecar_path(path).write_text(config.model_dump_json(indent=2), encoding="utf-8")
    log.info("checkpoint written path=%s tensors=%d", path, len(model.state_dict()))


def load_checkpoint(path: PathLike) -> Tuple[AedModel, ModelConfig]:
    side = sidecar_path(path)
    if not side.is_file():
        raise FormatError(f"missing config sidecar: {side}")
    try:
        config = ModelConfig.model_validate_json(side.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise FormatError(f"{side}: {e.errors()[0]['msg']}") from e
    model = build_model(config, np.random.default_rng(config.seed))
    model.load_state_dict(read_tensors(path))
    return model, config
