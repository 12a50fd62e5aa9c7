"""SMF chunk container: the on-disk body-model format.

Layout (all little-endian):
    magic "SMF1"
    u32 chunk count
    per chunk: u16 name length, UTF-8 name, u8 dtype (0=f64, 1=u32),
               u8 ndim, ndim x u64 dims, row-major payload

The container is generic; model-level validation lives in `soy.model`.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SMF1"

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<u4")}
_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("uint32"): 1}


class SmfError(Exception):
    """Base class for SMF container and model-load failures."""


class BadMagicError(SmfError):
    pass


class MissingChunkError(SmfError):
    def __init__(self, name: str):
        super().__init__(f"required chunk '{name}' is missing")
        self.chunk = name


class ChunkShapeError(SmfError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"chunk '{name}': {detail}")
        self.chunk = name


class ChunkFormatError(SmfError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"chunk '{name}': {detail}")
        self.chunk = name


def read_chunks(path: str | Path) -> dict[str, np.ndarray]:
    """Parse an SMF file into {chunk name: array}. Arrays are read-only."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an SMF file (bad magic {data[:4]!r})")
    pos = 4
    if len(data) < 8:
        raise ChunkFormatError("<header>", "truncated before chunk count")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    chunks: dict[str, np.ndarray] = {}
    for i in range(count):
        name = f"<chunk {i}>"
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            dtype_code, ndim = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
        except struct.error as exc:
            raise ChunkFormatError(name, f"truncated header: {exc}") from exc
        if dtype_code not in _DTYPES:
            raise ChunkFormatError(name, f"unknown dtype code {dtype_code}")
        dtype = _DTYPES[dtype_code]
        n_items = 1
        for d in dims:
            n_items *= d
        nbytes = n_items * dtype.itemsize
        payload = data[pos : pos + nbytes]
        if len(payload) != nbytes:
            raise ChunkShapeError(
                name, f"payload truncated: expected {nbytes} bytes, got {len(payload)}"
            )
        pos += nbytes
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
        arr.flags.writeable = False
        chunks[name] = arr
    return chunks


def write_chunks(path: str | Path, chunks: dict[str, np.ndarray]) -> None:
    """Write chunks in the given insertion order (byte-stable)."""
    parts = [MAGIC, struct.pack("<I", len(chunks))]
    for name, arr in chunks.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise ChunkFormatError(name, f"unsupported dtype {arr.dtype}")
        code = _DTYPE_CODES[arr.dtype]
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    Path(path).write_bytes(b"".join(parts))
