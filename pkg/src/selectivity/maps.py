"""The universal selectivity-map type plus its on-disk format (SELM).

A selectivity map is a non-negative H x W grid over an image, expressing
relative informativeness of each location. The same type carries model
attribution maps and human behavioral maps so the comparison pipeline can
treat both uniformly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grids import minmax_normalize

SELM_MAGIC = b"SELM"
SELM_VERSION = 1


class MapKind(str, Enum):
    """Provenance tag for a selectivity map."""

    VANILLA_GRAD = "vanillagrad"
    GBP = "gbp"
    GBP_X_IMAGE = "gbpxim"
    SGBP = "sgbp"
    GRAD_CAM = "gradcam"
    SCORE_CAM = "scorecam"
    PATCH = "patch"
    DPRIME = "dprime"
    SPATIAL_KDE = "spatial"
    FREE_FIX = "free"
    SALIENCY_FIX = "saliency"
    OBJECT_FIX = "object"
    HUMAN_PC = "humanpc"


ATTRIBUTION_KINDS = (
    MapKind.VANILLA_GRAD,
    MapKind.GBP,
    MapKind.GBP_X_IMAGE,
    MapKind.SGBP,
    MapKind.GRAD_CAM,
    MapKind.SCORE_CAM,
)

HUMAN_KINDS = (
    MapKind.PATCH,
    MapKind.DPRIME,
    MapKind.SPATIAL_KDE,
    MapKind.FREE_FIX,
    MapKind.SALIENCY_FIX,
    MapKind.OBJECT_FIX,
)

FIXATION_KINDS = (MapKind.FREE_FIX, MapKind.SALIENCY_FIX, MapKind.OBJECT_FIX)


@dataclass(frozen=True)
class SelectivityMap:
    """Non-negative H x W grid tagged with an image id and a map kind.

    ``degenerate`` marks maps whose source was constant (normalization had no
    dynamic range to stretch); their grid is identically zero by convention.
    """

    image_id: str
    kind: MapKind
    grid: np.ndarray = field(repr=False)
    degenerate: bool = False

    def __post_init__(self) -> None:
        grid = np.ascontiguousarray(np.asarray(self.grid, dtype=np.float64))
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise ValueError(f"map grid must be 2-D and nonempty, got shape {grid.shape}")
        if not np.isfinite(grid).all():
            raise ValueError("map grid contains non-finite values")
        if grid.min() < 0:
            raise ValueError("map grid contains negative values")
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape  # type: ignore[return-value]

    def with_grid(self, grid: np.ndarray, degenerate: bool | None = None) -> "SelectivityMap":
        flag = self.degenerate if degenerate is None else degenerate
        return replace(self, grid=grid, degenerate=flag)


def normalized_map(image_id: str, kind: MapKind, raw: np.ndarray) -> SelectivityMap:
    """Min-max normalize ``raw`` into a SelectivityMap, flagging constants."""
    grid, degenerate = minmax_normalize(raw)
    return SelectivityMap(image_id=image_id, kind=kind, grid=grid, degenerate=degenerate)


def write_selm(smap: SelectivityMap, path: str | Path) -> None:
    """Write the map grid in the SELM binary format.

    Layout: magic ``SELM``, u32 LE version, u32 LE height, u32 LE width,
    then row-major little-endian f32 values.
    """
    h, w = smap.shape
    payload = smap.grid.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(SELM_MAGIC)
        fh.write(struct.pack("<III", SELM_VERSION, h, w))
        fh.write(payload)


def read_selm(path: str | Path, image_id: str = "", kind: MapKind = MapKind.HUMAN_PC) -> SelectivityMap:
    """Read a SELM file; id and kind are supplied by the caller (the format
    stores only the grid)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated SELM header")
    if raw[:4] != SELM_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {SELM_MAGIC!r}")
    version, h, w = struct.unpack_from("<III", raw, 4)
    if version != SELM_VERSION:
        raise FormatError(f"{path}: unsupported SELM version {version}")
    expected = 16 + 4 * h * w
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {h}x{w} map, got {len(raw)}")
    grid = np.frombuffer(raw, dtype="<f4", offset=16).reshape(h, w).astype(np.float64)
    degenerate = bool(grid.max() == grid.min())
    return SelectivityMap(image_id=image_id, kind=kind, grid=grid, degenerate=degenerate)


def render_png(smap: SelectivityMap, path: str | Path) -> None:
    """Optional 8-bit grayscale rendering of a map, mainly for eyeballing."""
    from PIL import Image

    grid = smap.grid
    hi = grid.max()
    scaled = grid / hi if hi > 0 else grid
    img = Image.fromarray(np.round(scaled * 255.0).astype(np.uint8), mode="L")
    img.save(path)
