"""Versioned binary container for model checkpoints.

Layout::

    b"PMCKPT01"                    8-byte magic (format version 1)
    uint64 little-endian           length of the JSON header in bytes
    JSON header (UTF-8)            sorted keys; holds ``meta`` and an ``arrays`` manifest
    array payloads                 raw little-endian C-order buffers, in manifest order

Every manifest entry records ``name``, ``dtype``, ``shape``, ``offset`` (relative
to the end of the header) and ``nbytes``. Nothing time- or host-dependent is
written, so identical models serialize to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

MAGIC = b"PMCKPT01"


class CheckpointError(ValueError):
    pass


def array_digest(a: np.ndarray) -> str:
    a = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))
    return hashlib.sha256(a.tobytes()).hexdigest()


def save_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name, a in arrays.items():
        a = np.ascontiguousarray(a)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        blob = a.tobytes()
        manifest.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                         "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "arrays": manifest}, sort_keys=True,
                        separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a paramine checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    base = 16 + hlen
    arrays = {}
    for entry in header["arrays"]:
        start = base + entry["offset"]
        if start + entry["nbytes"] > len(data):
            raise CheckpointError(f"{path}: truncated array {entry['name']!r}")
        buf = data[start:start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return header["meta"], arrays
