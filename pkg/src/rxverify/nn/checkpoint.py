"""Binary parameter checkpoints.

Layout::

    b"RXNN" | uint32 LE version | uint32 LE header length | JSON header (UTF-8)
    | float32 LE parameter data, concatenated in header order

The header lists every parameter's name and shape plus free-form metadata.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"RXNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_blob(path, magic: bytes, header: dict, arrays) -> None:
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", VERSION, len(head)))
        fh.write(head)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_blob(path, magic: bytes) -> tuple[dict, memoryview]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != magic:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, n = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    return json.loads(raw[12:12 + n].decode()), memoryview(raw)[12 + n:]


def take_f32(payload: memoryview, offset: int, shape) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape, dtype=np.int64))
    end = offset + 4 * count
    if end > len(payload):
        raise CheckpointError("payload shorter than header declares")
    arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).copy()
    return arr, end


def save_checkpoint(path, model, meta: dict | None = None) -> None:
    state = model.state_dict()
    header = {
        "params": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
        "model": model.describe(),
        "meta": meta or {},
    }
    write_blob(path, MAGIC, header, state.values())


def read_checkpoint(path) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    header, payload = read_blob(path, MAGIC)
    state, off = OrderedDict(), 0
    for entry in header["params"]:
        state[entry["name"]], off = take_f32(payload, off, entry["shape"])
    if off != len(payload):
        raise CheckpointError("trailing bytes after parameter data")
    return state, header


def load_checkpoint(path, model) -> dict:
    """Load parameters into ``model`` (names and shapes must match); returns the header."""
    state, header = read_checkpoint(path)
    model.load_state_dict(state)
    return header
