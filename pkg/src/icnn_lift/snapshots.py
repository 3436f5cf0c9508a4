"""Versioned binary parameter snapshots.

Layout: ``MAGIC`` (9 bytes), header length as little-endian uint32, a UTF-8
JSON header ``{"version", "entries": [{"name", "shape", "flag"}], "meta"}``,
then every entry's data as little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ICNNSNAP\x01"
VERSION = 1


def snapshot_name(seed: int, iteration: int) -> str:
    return f"run_{int(seed)}_iter_{int(iteration)}.snap"


def write_snapshot(path, arrays: dict, flags: dict | None = None, meta: dict | None = None):
    flags = flags or {}
    entries = []
    blobs = []
    for name, a in arrays.items():
        a = np.asarray(a, dtype="<f8")  # keeps 0-d shapes; tobytes is always C order
        entries.append({"name": name, "shape": list(a.shape), "flag": bool(flags.get(name, False))})
        blobs.append(a.tobytes())
    header = json.dumps({"version": VERSION, "entries": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def read_snapshot(path):
    """Return ``(arrays, flags, meta)``."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a snapshot file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen].decode())
    off += hlen
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {header.get('version')}")
    arrays, flags = {}, {}
    for e in header["entries"]:
        shape = tuple(e["shape"])
        n = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64)
        off += 8 * n
        arrays[e["name"]] = a
        flags[e["name"]] = bool(e["flag"])
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return arrays, flags, header.get("meta", {})
