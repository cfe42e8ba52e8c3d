"""FSVF binary tensor files.

Layout: magic "FSVF", version u32, ndim u8, dims u32 x ndim, then the
payload as little-endian float32, row-major. Two header ranks are valid:
2 (flat, T x D) and 4 (spatial, T x C x H x W).
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"FSVF"
VERSION = 1
VALID_NDIMS = (2, 4)


class MalformedFileError(ValueError):
    """File is truncated or violates the FSVF layout."""


def write_fsvf(path, array: np.ndarray):
    """Atomically write `array` (rank 2 or 4) as an FSVF file."""
    array = np.asarray(array, dtype=np.float32)
    if array.ndim not in VALID_NDIMS:
        raise ValueError(f"FSVF arrays must have rank 2 or 4, got {array.ndim}")
    path = Path(path)
    header = MAGIC + struct.pack("<IB", VERSION, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_fsvf(path) -> np.ndarray:
    """Read an FSVF file; raises MalformedFileError on any layout violation."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 9:
        raise MalformedFileError(f"{path}: truncated header")
    if data[:4] != MAGIC:
        raise MalformedFileError(f"{path}: bad magic {data[:4]!r}")
    version, ndim = struct.unpack_from("<IB", data, 4)
    if version != VERSION:
        raise MalformedFileError(f"{path}: unsupported version {version}")
    if ndim not in VALID_NDIMS:
        raise MalformedFileError(f"{path}: invalid ndim {ndim}")
    header_end = 9 + 4 * ndim
    if len(data) < header_end:
        raise MalformedFileError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{ndim}I", data, 9)
    expected = int(np.prod(dims)) * 4
    payload = data[header_end:]
    if len(payload) != expected:
        raise MalformedFileError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
