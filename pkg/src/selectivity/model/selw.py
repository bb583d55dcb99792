"""Flat binary container for named weight tensors.

Layout (all integers little-endian):

    magic  b"SELW"
    u32    format version (currently 1)
    u32    tensor count
    then per tensor:
    u16    name length in bytes
    bytes  UTF-8 name
    u8     ndim
    u32[ndim]  dims
    f32[prod(dims)]  row-major payload

Weights are stored in float32; loading promotes to float64 so downstream math
runs in double precision.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

SELW_MAGIC = b"SELW"
SELW_VERSION = 1


def write_selw(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    parts = [SELW_MAGIC, struct.pack("<II", SELW_VERSION, len(tensors))]
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, buf: bytes, path: Path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated weight file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_selw(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    cur = _Cursor(path.read_bytes(), path)
    if cur.take(4) != SELW_MAGIC:
        raise FormatError(f"{path}: not a SELW weight file (bad magic)")
    version, count = cur.unpack("<II")
    if version != SELW_VERSION:
        raise FormatError(f"{path}: unsupported SELW version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = cur.unpack("<H")
        try:
            name = cur.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: tensor name is not valid UTF-8") from exc
        (ndim,) = cur.unpack("<B")
        dims = cur.unpack(f"<{ndim}I") if ndim else ()
        n = 1
        for d in dims:
            n *= d
        payload = cur.take(4 * n)
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor name '{name}'")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float64)
    if cur.pos != len(cur.buf):
        raise FormatError(f"{path}: {len(cur.buf) - cur.pos} trailing bytes after last tensor")
    return tensors
