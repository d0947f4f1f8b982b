"""FSTN: a tiny binary tensor container.

Layout, all little-endian:

    bytes 0..3   magic ``FSTN``
    byte  4      format version, currently 1
    byte  5      dtype code: 0 = float32, 1 = float64
    byte  6      rank r (0..255)
    next 4*r     extents, one uint32 per axis
    rest         payload, row-major (C order), exactly prod(extents)
                 elements of the coded dtype

Round trips are bit-exact: the payload is the raw IEEE-754 bytes, so
NaN payloads and signed zeros survive unchanged.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import DataError, InputError

MAGIC = b"FSTN"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

PathLike = Union[str, Path]


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialize a float32/float64 ndarray to FSTN bytes."""
    arr = np.asarray(array)
    le = arr.dtype.newbyteorder("<")
    if le not in _DTYPE_CODES:
        raise InputError(f"FSTN: only float32/float64 supported, got {arr.dtype}")
    if arr.ndim > 255:
        raise InputError(f"FSTN: rank {arr.ndim} exceeds 255")
    for extent in arr.shape:
        if extent > 0xFFFFFFFF:
            raise InputError(f"FSTN: extent {extent} exceeds uint32")
    header = MAGIC + struct.pack("<BBB", VERSION, _DTYPE_CODES[le], arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=le).tobytes()
    return header + payload


def tensor_from_bytes(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(raw) < 7:
        raise DataError(f"{source}: truncated FSTN header ({len(raw)} bytes)")
    if raw[:4] != MAGIC:
        raise DataError(f"{source}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    version, code, rank = struct.unpack("<BBB", raw[4:7])
    if version != VERSION:
        raise DataError(f"{source}: unsupported FSTN version {version}")
    if code not in _CODE_DTYPES:
        raise DataError(f"{source}: unknown dtype code {code}")
    offset = 7 + 4 * rank
    if len(raw) < offset:
        raise DataError(f"{source}: truncated extents (rank {rank})")
    shape = struct.unpack(f"<{rank}I", raw[7:offset]) if rank else ()
    dtype = _CODE_DTYPES[code]
    count = 1
    for extent in shape:
        count *= extent
    expected = offset + count * dtype.itemsize
    if len(raw) != expected:
        raise DataError(
            f"{source}: payload size mismatch, expected {expected} bytes total, got {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    # frombuffer returns a read-only view; copy so callers may mutate.
    return flat.reshape(shape).astype(dtype.newbyteorder("="), copy=True)


def save_tensor(path: PathLike, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_bytes(array))


def load_tensor(path: PathLike) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{p}: no such tensor file")
    return tensor_from_bytes(p.read_bytes(), source=str(p))
