"""Bit-exact binary tensor files.

Layout (all little-endian)::

    b"TROI" | u32 version=1 | u8 dtype (1=f32, 2=f64) | u8 rank | rank x u64 dims | payload
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TROI"
VERSION = 1
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_OF = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_HEADER = struct.Struct("<4sIBB")


class TensorFileError(ValueError):
    pass


def encode(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    code = _CODE_OF.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise TensorFileError(f"unsupported dtype {arr.dtype}")
    if arr.ndim > 255:
        raise TensorFileError("rank too large")
    head = _HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes()


def decode(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TensorFileError("truncated header")
    magic, version, code, rank = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise TensorFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFileError(f"unsupported version {version}")
    if code not in DTYPE_CODES:
        raise TensorFileError(f"unknown dtype code {code}")
    off = _HEADER.size
    if len(buf) < off + 8 * rank:
        raise TensorFileError("truncated dims")
    dims = struct.unpack_from(f"<{rank}Q", buf, off)
    off += 8 * rank
    dtype = DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=object)) if rank else 1
    if len(buf) - off != count * dtype.itemsize:
        raise TensorFileError(f"payload is {len(buf) - off} bytes, expected {count * dtype.itemsize}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


def save(path, arr: np.ndarray) -> None:
    path = Path(path)
    try:
        path.write_bytes(encode(arr))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def load(path) -> np.ndarray:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return decode(buf)
    except TensorFileError as exc:
        raise TensorFileError(f"{path}: {exc}") from exc
