"""Minimal SMF chunk-container writer/reader.

Intentionally self-contained: the converter talks to the fitting engine
only through the documented file format, not through its code. Layout
(little-endian throughout): magic "SMF1", u32 chunk count, per chunk a
u16 name length + UTF-8 name, u8 dtype code (0=f64, 1=u32), u8 ndim,
ndim x u64 dims, row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SMF1"
_CODES = {0: "<f8", 1: "<u4"}


class SmfFormatError(ValueError):
    pass


def write_chunks(path, chunks: dict[str, np.ndarray]) -> bytes:
    """Write chunks in insertion order; returns the serialized bytes."""
    out = [MAGIC, struct.pack("<I", len(chunks))]
    for name, arr in chunks.items():
        if arr.dtype == np.float64:
            code = 0
        elif arr.dtype == np.uint32:
            code = 1
        else:
            raise SmfFormatError(f"chunk '{name}': unsupported dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr)
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<BB", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    blob = b"".join(out)
    Path(path).write_bytes(blob)
    return blob


def read_chunks(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise SmfFormatError(f"{path}: bad magic")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    chunks = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        code, ndim = struct.unpack_from("<BB", data, pos)
        pos += 2
        dims = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        if code not in _CODES:
            raise SmfFormatError(f"chunk '{name}': unknown dtype code {code}")
        dtype = np.dtype(_CODES[code])
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        nbytes = n * dtype.itemsize
        payload = data[pos : pos + nbytes]
        if len(payload) != nbytes:
            raise SmfFormatError(f"chunk '{name}': truncated payload")
        pos += nbytes
        chunks[name] = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return chunks
