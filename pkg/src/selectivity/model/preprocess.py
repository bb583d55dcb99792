"""Image loading and model input preprocessing.

Preprocessing is entirely manifest-driven. When a manifest omits the
``preprocess`` block, 3-channel models fall back to the usual ImageNet
statistics and other channel counts to mean 0 / std 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from PIL import Image

from ..errors import GraphError
from ..grids import bilinear_resize

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# ITU-R 601 luma weights, the same convention PIL uses for mode "L"
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class PreprocessConfig:
    size: tuple[int, int]                 # (height, width)
    mean: tuple[float, ...]
    std: tuple[float, ...]
    channels: int
    grayscale: bool = False

    def __post_init__(self) -> None:
        if len(self.mean) != self.channels or len(self.std) != self.channels:
            raise GraphError(
                f"preprocess mean/std must have {self.channels} entries, "
                f"got {len(self.mean)}/{len(self.std)}"
            )
        if any(s <= 0 for s in self.std):
            raise GraphError(f"preprocess std must be positive, got {self.std}")


def preprocess_config_from_manifest(
    doc: Mapping[str, Any], input_shape: tuple[int, ...]
) -> PreprocessConfig:
    channels, height, width = input_shape
    block = doc.get("preprocess", {})
    if not isinstance(block, Mapping):
        raise GraphError("manifest preprocess block must be an object")
    size = block.get("size", [height, width])
    if channels == 3:
        default_mean, default_std = IMAGENET_MEAN, IMAGENET_STD
    else:
        default_mean, default_std = (0.0,) * channels, (1.0,) * channels
    return PreprocessConfig(
        size=(int(size[0]), int(size[1])),
        mean=tuple(float(v) for v in block.get("mean", default_mean)),
        std=tuple(float(v) for v in block.get("std", default_std)),
        channels=channels,
        grayscale=bool(block.get("grayscale", channels == 1)),
    )


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/PGM/PPM file as float64 in [0, 255].

    Returns H×W for single-channel files, H×W×3 otherwise.
    """
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.float64)
        return np.asarray(img.convert("RGB"), dtype=np.float64)


def preprocess(image: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Turn a raster into a model input tensor.

    Resizes bilinearly to the target size, scales to [0, 1], then applies
    per-channel (x − mean) / std. Channel count is adapted to the model:
    grayscale rasters replicate to 3 channels, RGB collapses to luma when the
    model is single-channel.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0:
        raise GraphError(f"empty image of shape {image.shape}")
    if image.ndim == 2:
        planes = [image] * cfg.channels
    elif image.ndim == 3 and image.shape[2] == 3:
        if cfg.channels == 3 and not cfg.grayscale:
            planes = [image[:, :, c] for c in range(3)]
        else:
            luma = image @ LUMA_WEIGHTS
            planes = [luma] * cfg.channels
    else:
        raise GraphError(f"unsupported image shape {image.shape}")

    h, w = cfg.size
    out = np.empty((cfg.channels, h, w))
    for c, plane in enumerate(planes):
        resized = plane if plane.shape == (h, w) else bilinear_resize(plane, h, w)
        out[c] = (resized / 255.0 - cfg.mean[c]) / cfg.std[c]
    return out
