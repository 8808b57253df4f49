"""Checkpoint file format.

Layout: magic "GPTR1", then one record per parameter until end of file:
  u32 name length, name bytes (utf-8), u32 rank, u32 extents[rank],
  float32 little-endian values (row-major).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import DimensionError, ParseError

MAGIC = b"GPTR1"


def save_checkpoint(named_params: list[tuple[str, Tensor]], path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        for name, t in named_params:
            ident = name.encode("utf-8")
            f.write(len(ident).to_bytes(4, "little"))
            f.write(ident)
            arr = np.ascontiguousarray(t.data, dtype="<f4")
            f.write(int(arr.ndim).to_bytes(4, "little"))
            for extent in arr.shape:
                f.write(int(extent).to_bytes(4, "little"))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:5] != MAGIC:
        raise ParseError(f"{path}: bad checkpoint magic, expected {MAGIC!r}")
    pos = 5
    out = {}
    while pos < len(blob):
        name_len = int.from_bytes(blob[pos:pos + 4], "little")
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        rank = int.from_bytes(blob[pos:pos + 4], "little")
        pos += 4
        shape = tuple(
            int.from_bytes(blob[pos + 4 * i:pos + 4 * i + 4], "little")
            for i in range(rank)
        )
        pos += 4 * rank
        count = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(blob, dtype="<f4", count=count,
                                  offset=pos).reshape(shape).copy()
        pos += 4 * count
    return out


def apply_checkpoint(named_params: list[tuple[str, Tensor]], values: dict) -> None:
    """Load saved values into the model, refusing shape mismatches."""
    for name, t in named_params:
        if name not in values:
            raise ParseError(f"checkpoint is missing parameter {name!r}")
        arr = values[name]
        if arr.shape != t.data.shape:
            raise DimensionError(
                f"checkpoint parameter {name!r} has shape {arr.shape}, "
                f"model expects {t.data.shape}"
            )
        t.data = arr.astype(t.data.dtype)
