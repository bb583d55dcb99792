"""Writer/reader for the SELW flat weight container.

This is the exporter's own implementation of the shared on-disk format, kept
independent of the inference engine's so each side checks the other. Layout,
little-endian throughout:

    magic  b"SELW"
    u32    version (1)
    u32    tensor count
    per tensor:
      u16       name length
      bytes     UTF-8 name
      u8        ndim
      u32*ndim  dims
      f32*prod  row-major payload

Values are stored as float32; callers are responsible for quantizing first if
they need the file to round-trip bit-exactly against their in-memory copy.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExportError

MAGIC = b"SELW"
VERSION = 1


def write_selw(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=np.float32)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ExportError(f"tensor name too long for format: {name[:40]}...")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", data.ndim)
        out += struct.pack(f"<{data.ndim}I", *data.shape)
        out += data.tobytes()
    Path(path).write_bytes(bytes(out))


def read_selw(path: str | Path) -> dict[str, np.ndarray]:
    """Read a SELW file back as float32 arrays, in file order."""
    path = Path(path)
    buf = path.read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise ExportError(f"{path}: truncated SELW file")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise ExportError(f"{path}: not a SELW file (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ExportError(f"{path}: unsupported SELW version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims)
        if name in tensors:
            raise ExportError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = arr.copy()
    if pos != len(buf):
        raise ExportError(f"{path}: {len(buf) - pos} trailing bytes after last tensor")
    return tensors
