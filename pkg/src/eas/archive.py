"""Binary tensor archive: the on-disk container for weights and features.

Layout (all integers little-endian):

    magic   4 bytes         b"EAS1"
    count   u32             number of entries
    entry   repeated:
        name_len  u32
        name      UTF-8 bytes
        rank      u32
        extents   rank x u64
        payload   prod(extents) x float32 (row-major)

Entry names are unique. Loading validates sizes up front and reports the
byte offset of the first malformed field; a bad archive is never partially
returned.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"EAS1"

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def save_archive(path, entries: dict[str, np.ndarray]) -> None:
    """Write named float32 tensors to ``path`` in insertion order."""
    names = list(entries)
    if len(set(names)) != len(names):
        raise DataError("archive entry names must be unique")
    blob = bytearray()
    blob += MAGIC
    blob += _U32.pack(len(names))
    for name in names:
        arr = np.ascontiguousarray(entries[name], dtype=np.float32)
        raw = name.encode("utf-8")
        blob += _U32.pack(len(raw))
        blob += raw
        blob += _U32.pack(arr.ndim)
        for ext in arr.shape:
            if ext <= 0:
                raise DataError(f"entry {name!r} has non-positive extent {ext}")
            blob += _U64.pack(ext)
        blob += arr.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_archive(path) -> dict[str, np.ndarray]:
    """Load an archive, returning {name: float32 ndarray}."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise DataError(f"{path}: truncated {what} at byte {pos}")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise DataError(f"{path}: bad magic at byte 0 (expected {MAGIC!r})")
    (count,) = _U32.unpack(take(4, "entry count"))
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = _U32.unpack(take(4, f"name length of entry {i}"))
        name_at = pos
        try:
            name = take(name_len, f"name of entry {i}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: entry {i} name is not UTF-8 at byte {name_at}") from exc
        if name in out:
            raise DataError(f"{path}: duplicate entry name {name!r} at byte {name_at}")
        (rank,) = _U32.unpack(take(4, f"rank of {name!r}"))
        shape = []
        for d in range(rank):
            (ext,) = _U64.unpack(take(8, f"extent {d} of {name!r}"))
            if ext == 0:
                raise DataError(f"{path}: zero extent in {name!r} at byte {pos - 8}")
            shape.append(int(ext))
        n_elem = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = take(4 * n_elem, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        out[name] = arr.astype(np.float32, copy=True)
    if pos != len(buf):
        raise DataError(f"{path}: {len(buf) - pos} trailing bytes after last entry (byte {pos})")
    return out
