"""Checkpoint container: named float arrays + a JSON index, byte-deterministic.

Layout: 8-byte magic, u32 index length, the JSON index (entries sorted by
name, each {name, shape, dtype, offset}), then the concatenated little-endian
payloads in index order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"GRAMCKP1"


def save_arrays(path, arrays: dict) -> None:
    index = []
    payloads = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        raw = arr.astype(dtype, copy=False).tobytes()
        index.append({"name": name, "shape": list(arr.shape),
                      "dtype": arr.dtype.name, "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    blob = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for raw in payloads:
            fh.write(raw)


def load_arrays(path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack_from("<I", raw, 8)
    index = json.loads(raw[12 : 12 + n].decode("utf-8"))
    base = 12 + n
    out = {}
    for entry in index:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = base + entry["offset"]
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=start)
        out[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
    return out
