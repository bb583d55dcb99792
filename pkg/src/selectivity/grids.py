"""Low-level 2-D grid numerics: resampling, Gaussian blur, normalization.

All functions take and return float64 arrays and are deterministic: fixed
kernel radii, fixed summation order, no RNG.
"""

from __future__ import annotations

import math

import numpy as np


def minmax_normalize(grid: np.ndarray) -> tuple[np.ndarray, bool]:
    """Affinely map ``grid`` onto [0, 1].

    Returns ``(normalized, degenerate)``. A constant input cannot be
    normalized; it maps to all zeros with ``degenerate=True``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    lo = float(grid.min())
    hi = float(grid.max())
    if hi == lo:
        return np.zeros_like(grid), True
    return (grid - lo) / (hi - lo), False


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Discrete Gaussian taps at integer offsets -r..r, r = ceil(2*sigma).

    Samples exp(-i^2 / (2 sigma^2)) and normalizes to unit sum, matching the
    common truncated-kernel image-filter convention.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(2.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_blur(grid: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate (edge) padding.

    ``sigma == 0`` is the identity. Kernel half-width is ceil(2*sigma).
    Constant inputs are preserved exactly because replicate padding plus a
    unit-sum kernel is an averaging operator.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return grid.copy()
    kernel = gaussian_kernel1d(sigma)
    radius = (kernel.size - 1) // 2
    out = _correlate_axis(grid, kernel, radius, axis=0)
    out = _correlate_axis(out, kernel, radius, axis=1)
    return out


def _correlate_axis(grid: np.ndarray, kernel: np.ndarray, radius: int, axis: int) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(grid, pad, mode="edge")
    out = np.zeros_like(grid)
    for i, k in enumerate(kernel):
        if axis == 0:
            out += k * padded[i : i + grid.shape[0], :]
        else:
            out += k * padded[:, i : i + grid.shape[1]]
    return out


def bilinear_resize(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel (pixel-center) alignment.

    Output pixel (i, j) samples the source at
    ``((i + 0.5) * H/out_h - 0.5, (j + 0.5) * W/out_w - 0.5)``, clamped to the
    source extent, the convention shared by most image libraries when
    antialiasing is off.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"output size must be positive, got {(out_h, out_w)}")
    h, w = grid.shape
    if (out_h, out_w) == (h, w):
        return grid.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    return _interp_rows_cols_linear(grid, ys, xs)


def _interp_rows_cols_linear(grid: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = grid.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _catmullrom_weights(t: np.ndarray) -> np.ndarray:
    """Weights of the four neighboring knots for fractional offsets ``t``.

    Cubic convolution kernel with a = -0.5 (Catmull-Rom). Columns correspond
    to knots at offsets -1, 0, +1, +2 from the floor position; rows sum to 1,
    so constants interpolate exactly.
    """
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    w_m1 = -0.5 * t3 + t2 - 0.5 * t
    w_0 = 1.5 * t3 - 2.5 * t2 + 1.0
    w_p1 = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w_p2 = 0.5 * t3 - 0.5 * t2
    return np.stack([w_m1, w_0, w_p1, w_p2], axis=-1)


def catmullrom_resize(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Catmull-Rom (bicubic, a = -0.5) knot interpolation to a new size.

    Uses corner-aligned mapping: output sample i lands at source coordinate
    ``i * (H-1)/(out_h-1)``, so knots are reproduced exactly wherever the
    mapping hits an integer position. Edge knots are replicated to supply the
    outer support points.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"output size must be positive, got {(out_h, out_w)}")
    h, w = grid.shape
    ys = _corner_aligned_coords(h, out_h)
    xs = _corner_aligned_coords(w, out_w)
    out = _interp_axis_catmullrom(grid, ys, axis=0)
    out = _interp_axis_catmullrom(out, xs, axis=1)
    return out


def _corner_aligned_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))


def _interp_axis_catmullrom(grid: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    if axis == 1:
        return _interp_axis_catmullrom(grid.T, coords, axis=0).T
    n = grid.shape[0]
    base = np.floor(coords).astype(int)
    base = np.minimum(base, n - 1)  # coords==n-1 keeps t in [0,1)
    t = coords - base
    weights = _catmullrom_weights(t)  # (len(coords), 4)
    out = np.zeros((coords.size, grid.shape[1]))
    for j, off in enumerate((-1, 0, 1, 2)):
        idx = np.clip(base + off, 0, n - 1)
        out += weights[:, j : j + 1] * grid[idx, :]
    return out
