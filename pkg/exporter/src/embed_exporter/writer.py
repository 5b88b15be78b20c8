"""Writer for the engine's binary embedding format (independent
implementation of the documented layout):

    magic "RIRE" | version u16 = 1 | dim u32 | count u64
    per record: id_len u32 | id UTF-8 | dim x f32, all little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

_HEADER = struct.Struct("<4sHIQ")
_IDLEN = struct.Struct("<I")


def write_embedding_file(path: str | Path, dim: int,
                         records: Iterable[tuple[str, np.ndarray]]) -> int:
    """Write (id, vector) records; returns the record count."""
    records = list(records)
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(b"RIRE", 1, dim, len(records)))
        for vid, vec in records:
            arr = np.ascontiguousarray(np.asarray(vec, dtype="<f4"))
            if arr.shape != (dim,):
                raise ValueError(f"vector {vid!r} has shape {arr.shape}, expected ({dim},)")
            raw = vid.encode("utf-8")
            fh.write(_IDLEN.pack(len(raw)))
            fh.write(raw)
            fh.write(arr.tobytes())
    return len(records)
