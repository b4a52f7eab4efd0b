"""PCCK checkpoint container.

Layout (little-endian): magic ``PCCK``, u32 version=1, u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 ndim, u32 dims, float32
payload; finally a u64 length-prefixed JSON trailer holding optimizer
scalars, epoch, RNG state, and the resolved config echo. Tensors are
written in sorted-name order so load-then-save reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PCCK"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    trailer = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks.append(struct.pack("<Q", len(trailer)))
    chunks.append(trailer)
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Returns (tensors as float64 arrays, trailer metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    view = memoryview(raw)
    offset = 0

    def need(nbytes: int, what: str) -> int:
        nonlocal offset
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated while reading {what}", offset=offset)
        start = offset
        offset += nbytes
        return start

    start = need(4, "magic")
    if bytes(view[start:start + 4]) != MAGIC:
        raise FormatError(f"{path}: bad magic {bytes(view[start:start + 4])!r}", offset=0)
    start = need(8, "header")
    version, count = struct.unpack_from("<II", raw, start)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", offset=4)

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        start = need(2, "tensor name length")
        (name_len,) = struct.unpack_from("<H", raw, start)
        start = need(name_len, "tensor name")
        name = bytes(view[start:start + name_len]).decode("utf-8")
        start = need(1, f"{name} ndim")
        (ndim,) = struct.unpack_from("<B", raw, start)
        start = need(4 * ndim, f"{name} dims")
        dims = struct.unpack_from(f"<{ndim}I", raw, start)
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        start = need(4 * size, f"{name} payload")
        arr = np.frombuffer(raw, dtype="<f4", count=size, offset=start).reshape(dims)
        tensors[name] = arr.astype(np.float64)

    start = need(8, "trailer length")
    (trailer_len,) = struct.unpack_from("<Q", raw, start)
    start = need(trailer_len, "trailer")
    try:
        meta = json.loads(bytes(view[start:start + trailer_len]).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: unreadable JSON trailer: {exc}", offset=start) from exc
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes after trailer", offset=offset)
    return tensors, meta
