"""Checkpoint container: JSON architecture header + raw little-endian
float32 parameter block + sha256 integrity checksum.

The version field increments on every save to the same path, so a
checkpoint file carries its own lineage counter.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

_MAGIC = b"CLCKPT01"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arch: dict, flat: np.ndarray, extra: dict | None = None, version: int | None = None) -> int:
    flat = np.ascontiguousarray(flat, dtype="<f4")
    payload = flat.tobytes()
    if version is None:
        version = 1
        if os.path.exists(path):
            try:
                version = peek_version(path) + 1
            except (CheckpointError, OSError):
                version = 1
    header = {
        "arch": arch,
        "version": int(version),
        "n_params": int(flat.size),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        f.write(payload)
    return version


def _read_header(f) -> dict:
    magic = f.read(len(_MAGIC))
    if magic != _MAGIC:
        raise CheckpointError(f"not a checkpoint: bad magic {magic!r}")
    (hlen,) = struct.unpack("<I", f.read(4))
    return json.loads(f.read(hlen).decode())


def peek_version(path) -> int:
    with open(path, "rb") as f:
        return int(_read_header(f)["version"])


def load_checkpoint(path) -> tuple[dict, np.ndarray, dict, int]:
    """Returns (arch, flat float32 params, extra, version); verifies checksum."""
    with open(path, "rb") as f:
        header = _read_header(f)
        payload = f.read(header["n_params"] * 4)
    if len(payload) != header["n_params"] * 4:
        raise CheckpointError("truncated parameter block")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError("parameter block checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return header["arch"], flat, header["extra"], int(header["version"])
