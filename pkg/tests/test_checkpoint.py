import struct
import zlib

import numpy as np
import pytest

from adaconv.checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointError,
    CheckpointKindError,
    dumps,
    load_checkpoint,
    loads,
    save_checkpoint,
)
from adaconv.networks import CompletionNet, ModelWeights, init_weights


@pytest.fixture
def ckpt(rng):
    w = init_weights(CompletionNet().spec, rng)
    return Checkpoint(w, {"epoch": 3, "note": "unit"})


def test_save_load_save_identical(tmp_path, ckpt):
    save_checkpoint(tmp_path / "a.bin", ckpt)
    back = load_checkpoint(tmp_path / "a.bin", "completion")
    save_checkpoint(tmp_path / "b.bin", back)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert back.metadata == ckpt.metadata and back.kind == "completion"
    for k, v in ckpt.weights.tensors.items():
        assert back.weights.tensors[k].tobytes() == v.astype(np.float32).tobytes()


def test_header_layout(ckpt):
    raw = dumps(ckpt)
    assert raw[:6] == MAGIC
    assert struct.unpack("<I", raw[6:10]) == (1,)
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])


@pytest.mark.parametrize("cut", [3, 10, 40, -5, -1])
def test_truncated(ckpt, cut):
    raw = dumps(ckpt)
    with pytest.raises(CheckpointError):
        loads(raw[:cut])


def test_flipped_byte_fails_checksum(ckpt):
    raw = bytearray(dumps(ckpt))
    raw[len(raw) // 2] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        loads(bytes(raw))


def test_unknown_version(ckpt):
    raw = bytearray(dumps(ckpt))
    raw[6:10] = struct.pack("<I", 2)
    body = bytes(raw[:-4])
    with pytest.raises(CheckpointError, match="version"):
        loads(body + struct.pack("<I", zlib.crc32(body)))


def test_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"PK\x03\x04" + bytes(40))


def test_kind_mismatch(ckpt):
    with pytest.raises(CheckpointKindError):
        loads(dumps(ckpt), "superres")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nowhere.bin"):
        load_checkpoint(tmp_path / "nowhere.bin")


def test_scalar_and_empty_tensors():
    w = ModelWeights("completion", {"a": np.float32(2.5).reshape(()), "b": np.zeros((0, 3), np.float32)})
    back = loads(dumps(Checkpoint(w)))
    assert back.weights.tensors["a"].shape == () and back.weights.tensors["a"] == 2.5
    assert back.weights.tensors["b"].shape == (0, 3)
