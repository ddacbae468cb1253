"""Checkpoint I/O: one flat binary blob plus a text index.

The blob is the concatenation of each tensor's little-endian bytes in
index order. The index is a text file (checkpoint path + ".index") with
one line per tensor: name, dtype, comma-joined shape, byte offset. Round
trips are bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import DataError

INDEX_SUFFIX = ".index"
_HEADER = "# checkpoint-index v1"


def save_checkpoint(path: str, state: dict) -> None:
    blob = bytearray()
    lines = [_HEADER]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        offset = len(blob)
        blob.extend(arr.tobytes())
        shape = ",".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{name}\t{arr.dtype.name}\t{shape}\t{offset}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))
    with open(path + INDEX_SUFFIX, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path: str) -> dict:
    index_path = path + INDEX_SUFFIX
    if not os.path.exists(index_path):
        raise DataError(f"missing checkpoint index: {index_path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    state = {}
    with open(index_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise DataError(f"malformed index line: {line!r}")
            name, dtype_name, shape_text, offset_text = fields
            shape = () if shape_text == "scalar" else tuple(
                int(d) for d in shape_text.split(","))
            dtype = np.dtype(dtype_name)
            count = int(np.prod(shape)) if shape else 1
            offset = int(offset_text)
            end = offset + count * dtype.itemsize
            if end > len(blob):
                raise DataError("checkpoint blob shorter than index claims")
            arr = np.frombuffer(blob, dtype=dtype, count=count,
                                offset=offset).reshape(shape)
            state[name] = arr.copy()
    return state
