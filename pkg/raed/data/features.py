"""RAFX feature container.

Layout (little-endian):

    b"RAFX" | u32 version | u32 utterance count | u32 feature dim
    per utterance: u32 frame count | frames x feature_dim float32

Manifest offsets point at an utterance's frame-count word. Frames are stored
as float32 and promoted to float64 when read.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Iterator, List, Optional, Tuple, Union

import numpy as np

from raed.utils.errors import FormatError

MAGIC = b"RAFX"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_COUNT = struct.Struct("<I")

PathLike = Union[str, Path]


class FeatureWriter:
    def __init__(self, path: PathLike, feature_dim: int) -> None:
        self.path = Path(path)
        self.feature_dim = feature_dim
        self.count = 0
        self._fh: Optional[BinaryIO] = None

    def __enter__(self) -> "FeatureWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, 0, self.feature_dim))
        return self

    def append(self, frames: np.ndarray) -> int:
        """Write one utterance; returns its byte offset."""
        if self._fh is None:
            raise RuntimeError("writer is not open")
        frames = np.asarray(frames)
        if frames.ndim != 2 or frames.shape[1] != self.feature_dim:
            raise FormatError(f"frames {frames.shape} do not match feature dim {self.feature_dim}")
        offset = self._fh.tell()
        self._fh.write(_COUNT.pack(frames.shape[0]))
        self._fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())
        self.count += 1
        return offset

    def __exit__(self, *exc) -> None:
        if self._fh is None:
            return
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self.count, self.feature_dim))
        self._fh.close()
        self._fh = None


class FeatureReader:
    def __init__(self, path: PathLike) -> None:
        self.path = Path(path)
        if not self.path.is_file():
            raise FormatError(f"feature container not found: {self.path}")
        self._blob = self.path.read_bytes()
        if len(self._blob) < _HEADER.size:
            raise FormatError(f"{self.path}: truncated header")
        magic, version, self.count, self.feature_dim = _HEADER.unpack_from(self._blob, 0)
        if magic != MAGIC:
            raise FormatError(f"{self.path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{self.path}: unsupported version {version}")

    def _block(self, offset: int) -> Tuple[np.ndarray, int]:
        if offset < _HEADER.size or offset + _COUNT.size > len(self._blob):
            raise FormatError(f"{self.path}: offset {offset} out of range")
        (frames,) = _COUNT.unpack_from(self._blob, offset)
        start = offset + _COUNT.size
        end = start + frames * self.feature_dim * 4
        if end > len(self._blob):
            raise FormatError(f"{self.path}: utterance at {offset} runs past the end of the file")
        data = np.frombuffer(self._blob[start:end], dtype="<f4").reshape(frames, self.feature_dim)
        return data.astype(np.float64), end

    def read(self, offset: int, frames: Optional[int] = None) -> np.ndarray:
        data, _ = self._block(offset)
        if frames is not None and data.shape[0] != frames:
            raise FormatError(f"{self.path}: expected {frames} frames at {offset}, found {data.shape[0]}")
        return data

    def __iter__(self) -> Iterator[Tuple[int, np.ndarray]]:
        """Sequential scan yielding (offset, frames)."""
        pos = _HEADER.size
        for _ in range(self.count):
            data, end = self._block(pos)
            yield pos, data
            pos = end
        if pos != len(self._blob):
            raise FormatError(f"{self.path}: {len(self._blob) - pos} trailing bytes")

    def read_all(self) -> List[np.ndarray]:
        return [frames for _, frames in self]
