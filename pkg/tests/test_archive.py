import struct

import numpy as np
import pytest

from eas.archive import MAGIC, load_archive, save_archive
from eas.errors import DataError


def test_round_trip_values_and_bytes(tmp_path):
    rng = np.random.default_rng(1)
    entries = {
        "alpha": rng.normal(size=(3, 4)).astype(np.float32),
        "beta": rng.normal(size=(2, 2, 2)).astype(np.float32),
        "gamma": rng.normal(size=5).astype(np.float32),
    }
    p1 = tmp_path / "a.eas"
    save_archive(p1, entries)
    loaded = load_archive(p1)
    assert list(loaded) == ["alpha", "beta", "gamma"]
    for name, arr in entries.items():
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], arr)
    # save(load(x)) is byte-identical
    p2 = tmp_path / "b.eas"
    save_archive(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_golden_bytes(tmp_path):
    """Byte-level layout check against a hand-packed archive."""
    path = tmp_path / "g.eas"
    save_archive(path, {"a": np.array([[1.0]], np.float32)})
    expect = (
        MAGIC
        + struct.pack("<I", 1)            # entry count
        + struct.pack("<I", 1) + b"a"     # name
        + struct.pack("<I", 2)            # rank
        + struct.pack("<Q", 1) * 2        # extents
        + struct.pack("<f", 1.0)          # payload
    )
    assert path.read_bytes() == expect


def test_little_endian_payload(tmp_path):
    path = tmp_path / "e.eas"
    save_archive(path, {"x": np.array([1.0], np.float32)})
    assert path.read_bytes()[-4:] == b"\x00\x00\x80\x3f"


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.eas"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError, match="bad magic at byte 0"):
        load_archive(path)


def test_truncated_payload_reports_position(tmp_path):
    path = tmp_path / "t.eas"
    save_archive(path, {"x": np.arange(6, dtype=np.float32)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(DataError, match=r"truncated payload of 'x' at byte \d+"):
        load_archive(path)


def test_duplicate_names_rejected_on_load(tmp_path):
    path = tmp_path / "d.eas"
    one = (struct.pack("<I", 1) + b"x" + struct.pack("<I", 1)
           + struct.pack("<Q", 1) + struct.pack("<f", 2.0))
    path.write_bytes(MAGIC + struct.pack("<I", 2) + one + one)
    with pytest.raises(DataError, match="duplicate entry name"):
        load_archive(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "tr.eas"
    save_archive(path, {"x": np.array([1.0], np.float32)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(DataError, match="trailing bytes"):
        load_archive(path)


def test_zero_extent_rejected(tmp_path):
    path = tmp_path / "z.eas"
    blob = (MAGIC + struct.pack("<I", 1) + struct.pack("<I", 1) + b"x"
            + struct.pack("<I", 1) + struct.pack("<Q", 0))
    path.write_bytes(blob)
    with pytest.raises(DataError, match="zero extent"):
        load_archive(path)
