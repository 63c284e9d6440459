"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        6 bytes  b"ARGBD1"
    version      u32
    kind         u16 length + UTF-8
    metadata     u32 length + UTF-8 JSON
    count        u32
    count x tensor:
        name     u16 length + UTF-8
        ndim     u8
        dims     ndim x u32
        data     prod(dims) x float32
    crc32        u32 over every preceding byte
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .networks.common import ModelWeights

MAGIC = b"ARGBD1"
VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is truncated, corrupted, or of an unsupported version."""


class CheckpointKindError(CheckpointError):
    """A checkpoint holds a different network than the one requested."""


@dataclass
class Checkpoint:
    weights: ModelWeights
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.weights.kind


def _pack_str(s: str, fmt: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(fmt, len(raw)) + raw


def dumps(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(_pack_str(ckpt.kind, "<H"))
    buf.write(_pack_str(json.dumps(ckpt.metadata, sort_keys=True), "<I"))
    tensors = ckpt.weights.tensors
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        buf.write(_pack_str(name, "<H"))
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self, fmt: str) -> str:
        (n,) = self.unpack(fmt)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError("checkpoint contains an invalid string") from exc


def loads(data: bytes, expected_kind: str | None = None) -> Checkpoint:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError("checkpoint is truncated")
    r = _Reader(data[:-4])
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checkpoint is truncated or corrupted (checksum mismatch)")
    kind = r.string("<H")
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointKindError(f"checkpoint holds a {kind!r} network, expected {expected_kind!r}")
    try:
        metadata = json.loads(r.string("<I"))
    except json.JSONDecodeError as exc:
        raise CheckpointError("checkpoint metadata is not valid JSON") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        name = r.string("<H")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}I")
        size = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)
    if r.pos != len(r.data):
        raise CheckpointError("checkpoint has trailing bytes")
    return Checkpoint(ModelWeights(kind, tensors), metadata)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load_checkpoint(path, expected_kind: str | None = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes(), expected_kind)
