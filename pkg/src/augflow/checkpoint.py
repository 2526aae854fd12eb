"""Flat binary parameter checkpoints.

Byte layout (all integers little-endian, values raw IEEE-754 float64
little-endian):

    magic   4 bytes  b"AFC1"
    count   uint32   number of records
    then per record:
        name_len uint16
        name     name_len bytes, UTF-8
        ndim     uint8
        dims     ndim * uint32
        values   prod(dims) * float64

Record order is preserved; loading returns records in file order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AFC1"


def save_checkpoint(path: str | Path, records: list[tuple[str, np.ndarray]]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(records))]
    for name, arr in records:
        a = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(np.ascontiguousarray(a).astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> list[tuple[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    off = 4
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    records: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        vals = np.frombuffer(buf, dtype="<f8", count=n, offset=off).copy()
        off += 8 * n
        records.append((name, vals.reshape(dims)))
    if off != len(buf):
        raise ValueError(f"{path}: trailing bytes after last record")
    return records
