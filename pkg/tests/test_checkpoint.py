"""Binary checkpoint format round-trips."""

import numpy as np
import pytest

from augflow import checkpoint as C


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    records = [
        ("policy.w0", rng.normal(size=(4, 7))),
        ("policy.b0", rng.normal(size=7)),
        ("log_z", np.asarray(0.25)),
    ]
    path = tmp_path / "model.ckpt"
    C.save_checkpoint(path, records)
    loaded = C.load_checkpoint(path)
    assert [n for n, _ in loaded] == [n for n, _ in records]
    for (_, a), (_, b) in zip(records, loaded):
        assert a.shape == b.shape
        assert np.array_equal(np.asarray(a, dtype=np.float64), b)


def test_deterministic_bytes(tmp_path):
    arr = np.arange(12.0).reshape(3, 4)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    C.save_checkpoint(p1, [("x", arr)])
    C.save_checkpoint(p2, [("x", arr)])
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="bad magic"):
        C.load_checkpoint(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "t.ckpt"
    C.save_checkpoint(p, [("x", np.ones(2))])
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        C.load_checkpoint(p)
