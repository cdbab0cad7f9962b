"""Stand-alone writer for the engine's tensor-archive format.

Deliberately independent of the engine's own implementation: the format
(magic "EAS1", u32 LE entry count, then per entry a u32 LE name length,
UTF-8 name, u32 LE rank, u64 LE extents, and a row-major little-endian
float32 payload) is the contract between the two packages, so each side
implements it separately and the round-trip tests cross-check them.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EAS1"


def write_archive(path, entries: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(entries))]
    seen = set()
    for name, arr in entries.items():
        if name in seen:
            raise ValueError(f"duplicate archive entry {name!r}")
        seen.add(name)
        data = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.extend(struct.pack("<Q", ext) for ext in data.shape)
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))
