"""Checkpoint container: structured-text header + raw float32 tensors.

Layout of a ``.ckpt`` file:

* line 1: ``CHANGEFLOW-CKPT v1`` (ASCII magic + format version)
* line 2: one JSON object ``{"kind": ..., "meta": {...}, "tensors": [[name, shape], ...]}``
* body: the listed tensors as raw little-endian float32 bytes, concatenated
  in declaration order (the order of the ``tensors`` list).

``meta`` carries whatever the owning module documents (codec factor/channels,
model dims, config echo, seed). Loaders verify magic, tensor count and byte
length, so truncated or foreign files fail loudly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import LoadError

MAGIC = "CHANGEFLOW-CKPT v1"


def save_checkpoint(path: str | Path, kind: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors (declaration order = dict insertion order) with a metadata header."""
    entries = []
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        entries.append([name, list(arr.shape)])
        blobs.append(arr.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "tensors": entries})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC.encode("ascii") + b"\n")
        fh.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Read a container back; returns (kind, meta, name -> float32 array)."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"checkpoint file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic.decode("ascii", errors="replace") != MAGIC:
            raise LoadError(f"{path}: bad magic {magic!r}; expected {MAGIC!r}")
        try:
            header = json.loads(fh.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise LoadError(f"{path}: unreadable checkpoint header ({err})") from err
        body = fh.read()
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in header.get("tensors", []):
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(body):
            raise LoadError(f"{path}: truncated tensor data for {name!r}")
        tensors[name] = np.frombuffer(body[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(body):
        raise LoadError(f"{path}: {len(body) - offset} trailing bytes after declared tensors")
    return header.get("kind", ""), header.get("meta", {}), tensors
