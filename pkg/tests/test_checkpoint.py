import json

import numpy as np
import pytest

from changeflow.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from changeflow.errors import LoadError


def test_roundtrip_preserves_order_values_and_meta(tmp_path):
    path = tmp_path / "x.ckpt"
    tensors = {
        "b.weight": np.arange(6, dtype=np.float32).reshape(2, 3),
        "a.bias": np.array([1.5, -2.0], dtype=np.float32),
    }
    save_checkpoint(path, "unit-test", {"factor": 4, "channels": 2}, tensors)
    kind, meta, loaded = load_checkpoint(path)
    assert kind == "unit-test"
    assert meta == {"factor": 4, "channels": 2}
    assert list(loaded) == ["b.weight", "a.bias"]  # declaration order kept
    for name in tensors:
        assert np.array_equal(loaded[name], tensors[name])


def test_header_is_structured_text(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "k", {"v": 1}, {"t": np.zeros(3, dtype=np.float32)})
    with open(path, "rb") as fh:
        assert fh.readline().rstrip(b"\n").decode() == MAGIC
        header = json.loads(fh.readline())
    assert header["tensors"] == [["t", [3]]]


def test_body_is_little_endian_float32(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "k", {}, {"t": np.array([1.0, -2.5], dtype=np.float64)})
    raw = path.read_bytes()
    body = raw.split(b"\n", 2)[2]
    assert np.array_equal(np.frombuffer(body, dtype="<f4"), np.array([1.0, -2.5], dtype="<f4"))


def test_missing_file_rejected(tmp_path):
    with pytest.raises(LoadError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOT-A-CKPT\n{}\n")
    with pytest.raises(LoadError):
        load_checkpoint(path)


def test_truncated_body_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "k", {}, {"t": np.zeros(8, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(LoadError):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "k", {}, {"t": np.zeros(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(LoadError):
        load_checkpoint(path)
