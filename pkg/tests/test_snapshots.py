import struct

import numpy as np
import pytest

from icnn_lift.snapshots import MAGIC, read_snapshot, snapshot_name, write_snapshot


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"W1": rng.standard_normal((3, 4)), "b0": rng.standard_normal(4), "s": np.array(2.5)}
    p = tmp_path / snapshot_name(7, 300)
    assert p.name == "run_7_iter_300.snap"
    write_snapshot(p, arrays, {"W1": True}, {"iteration": 300})
    back, flags, meta = read_snapshot(p)
    assert list(back) == list(arrays)
    for k in arrays:
        assert np.array_equal(back[k], arrays[k]) and back[k].shape == np.shape(arrays[k])
    assert flags == {"W1": True, "b0": False, "s": False}
    assert meta == {"iteration": 300}
    raw = p.read_bytes()
    assert raw.startswith(MAGIC)
    (hlen,) = struct.unpack("<I", raw[len(MAGIC) : len(MAGIC) + 4])
    assert len(raw) == len(MAGIC) + 4 + hlen + 8 * (12 + 4 + 1)


def test_corrupt_files_rejected(tmp_path):
    p = tmp_path / "x.snap"
    write_snapshot(p, {"a": np.ones(3)})
    raw = p.read_bytes()
    (tmp_path / "bad_magic.snap").write_bytes(b"NOTASNAP" + raw[8:])
    (tmp_path / "trunc.snap").write_bytes(raw[:-4])
    (tmp_path / "extra.snap").write_bytes(raw + b"\0")
    for name in ("bad_magic.snap", "trunc.snap", "extra.snap"):
        with pytest.raises(ValueError):
            read_snapshot(tmp_path / name)
