"""Estimate the six human selectivity map types from behavioral records.

Every estimator is deterministic (no RNG) and returns a min-max- or
mass-normalized SelectivityMap. Bandwidths the source data do not determine
are explicit keyword arguments with documented defaults.
"""

from __future__ import annotations

import numpy as np

from ..errors import EstimatorError
from ..grids import catmullrom_resize, gaussian_blur
from ..maps import MapKind, SelectivityMap, normalized_map
from ..sdt import corrected_rate, dprime_from_rates
from .records import (
    PATCH_GRID,
    ChainPoint,
    DiscriminationTrial,
    Fixation,
    PatchRating,
)

# map kind produced for each fixation task
TASK_KINDS = {
    "free": MapKind.FREE_FIX,
    "saliency": MapKind.SALIENCY_FIX,
    "object": MapKind.OBJECT_FIX,
}


def _image_id_of(records, explicit: str | None) -> str:
    if explicit is not None:
        return explicit
    return records[0].image_id


def patch_map(
    ratings: list[PatchRating],
    out_size: tuple[int, int],
    kernel_sigma: float | None = None,
    grid_shape: tuple[int, int] = PATCH_GRID,
    image_id: str | None = None,
) -> SelectivityMap:
    """Likert patch ratings -> smooth map.

    Each grid cell's mean rating sits at the cell's center pixel; every output
    pixel takes a Gaussian-weighted average of all cell means (weights
    normalized per pixel), is then squared to stretch dynamic range, and
    finally min-max normalized. Default sigma is half the inter-cell spacing.
    """
    if not ratings:
        raise EstimatorError("patch map needs at least one rating")
    gh, gw = grid_shape
    sums = np.zeros((gh, gw))
    counts = np.zeros((gh, gw), dtype=int)
    for r in ratings:
        if not (0 <= r.grid_row < gh and 0 <= r.grid_col < gw):
            raise EstimatorError(
                f"rating at cell ({r.grid_row}, {r.grid_col}) outside {gh}x{gw} grid"
            )
        sums[r.grid_row, r.grid_col] += r.rating
        counts[r.grid_row, r.grid_col] += 1
    if (counts == 0).any():
        empty = [tuple(int(v) for v in cell) for cell in np.argwhere(counts == 0)]
        raise EstimatorError(f"grid cell(s) with no ratings: {empty}")
    means = sums / counts

    h, w = out_size
    spacing_y, spacing_x = h / gh, w / gw
    if kernel_sigma is None:
        kernel_sigma = 0.25 * (spacing_y + spacing_x)  # half the mean spacing
    if kernel_sigma <= 0:
        raise EstimatorError(f"kernel_sigma must be positive, got {kernel_sigma}")

    cy = (np.arange(gh) + 0.5) * spacing_y - 0.5
    cx = (np.arange(gw) + 0.5) * spacing_x - 0.5
    inv = 1.0 / (2.0 * kernel_sigma * kernel_sigma)
    ey = ((np.arange(h)[:, None] - cy[None, :]) ** 2) * inv   # (h, gh)
    ex = ((np.arange(w)[:, None] - cx[None, :]) ** 2) * inv   # (w, gw)
    out = np.empty((h, w))
    # center the cell means so a constant rating field stays exactly constant
    # through the weighted average (and gets flagged degenerate downstream)
    center = float(means.mean())
    flat_means = means.ravel() - center
    for y in range(h):
        e = -(ey[y][None, :, None] + ex[:, None, :])   # (w, gh, gw)
        e = e.reshape(w, gh * gw)
        # subtract the per-pixel max so tiny sigmas cannot underflow to 0/0
        e -= e.max(axis=1, keepdims=True)
        wgt = np.exp(e)
        out[y] = center + (wgt @ flat_means) / wgt.sum(axis=1)
    return normalized_map(_image_id_of(ratings, image_id), MapKind.PATCH, out**2)


def dprime_point(trials: list[DiscriminationTrial]) -> float:
    """Sensitivity at one probe point from same/shifted 2AFC responses.

    HIT = P(respond shifted | shifted), FA = P(respond shifted | same);
    empirical rates of 0 or 1 are pulled in by 1/(2n); negative d' reports 0.
    """
    shifted = [t for t in trials if t.condition == "shifted"]
    same = [t for t in trials if t.condition == "same"]
    if not shifted or not same:
        missing = "shifted" if not shifted else "same"
        raise EstimatorError(f"no {missing!r}-condition trials at this point")
    hit = corrected_rate(sum(t.response == "shifted" for t in shifted), len(shifted))
    fa = corrected_rate(sum(t.response == "shifted" for t in same), len(same))
    return dprime_from_rates(hit, fa)


def dprime_grid(trials: list[DiscriminationTrial]) -> np.ndarray:
    """Arrange per-point d' values on the probe lattice (sorted unique y by x)."""
    if not trials:
        raise EstimatorError("no discrimination trials")
    ys = sorted({t.y for t in trials})
    xs = sorted({t.x for t in trials})
    index = {}
    for t in trials:
        index.setdefault((t.y, t.x), []).append(t)
    grid = np.zeros((len(ys), len(xs)))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            cell = index.get((y, x))
            if cell is None:
                raise EstimatorError(f"no trials at lattice point (x={x}, y={y})")
            grid[i, j] = dprime_point(cell)
    return grid


def dprime_map(
    grid_values: np.ndarray,
    smooth_sigma: float,
    out_size: tuple[int, int],
    image_id: str = "",
) -> SelectivityMap:
    """Smooth the d' lattice, upsample with Catmull-Rom cubic interpolation,
    square, and min-max normalize."""
    grid_values = np.asarray(grid_values, dtype=np.float64)
    if grid_values.ndim != 2 or min(grid_values.shape) < 4:
        raise EstimatorError(
            f"d' grid must be at least 4x4 for cubic interpolation, got {grid_values.shape}"
        )
    if smooth_sigma < 0:
        raise EstimatorError(f"smooth_sigma must be >= 0, got {smooth_sigma}")
    smoothed = gaussian_blur(grid_values, smooth_sigma)
    up = catmullrom_resize(smoothed, out_size[0], out_size[1])
    return normalized_map(image_id, MapKind.DPRIME, up**2)


def silverman_bandwidth(coords: np.ndarray) -> float:
    """Per-axis rule-of-thumb bandwidth: 0.9 min(sd, IQR/1.34) n^(-1/5).

    Falls back to 1 px when the data carry no spread to estimate from.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.size
    if n < 2:
        return 1.0
    sd = float(coords.std(ddof=1))
    q75, q25 = np.percentile(coords, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        return 1.0
    return 0.9 * spread * n ** (-0.2)


def kde_map(
    points: np.ndarray,
    out_size: tuple[int, int],
    bandwidth: tuple[float, float] | None = None,
    image_id: str = "",
    kind: MapKind = MapKind.SPATIAL_KDE,
) -> SelectivityMap:
    """Sum of axis-aligned Gaussian bumps on the pixel lattice, normalized to
    unit total mass.

    ``points`` is an (n, 2) array of (x, y) pixel coordinates; ``bandwidth``
    is (sigma_x, sigma_y), defaulting to Silverman's rule per axis.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise EstimatorError("KDE needs at least one point")
    if points.shape[1] != 2:
        raise EstimatorError(f"points must be (n, 2) of x,y; got shape {points.shape}")
    if bandwidth is None:
        bandwidth = (silverman_bandwidth(points[:, 0]), silverman_bandwidth(points[:, 1]))
    sx, sy = bandwidth
    if sx <= 0 or sy <= 0:
        raise EstimatorError(f"bandwidths must be positive, got {bandwidth}")
    h, w = out_size
    ex = np.exp(-((np.arange(w)[None, :] - points[:, 0][:, None]) ** 2) / (2 * sx * sx))
    ey = np.exp(-((np.arange(h)[None, :] - points[:, 1][:, None]) ** 2) / (2 * sy * sy))
    density = ey.T @ ex   # (h, w): sums each point's separable bump
    total = density.sum()
    if total <= 0:
        raise EstimatorError("all KDE mass fell outside the output grid")
    return SelectivityMap(image_id=image_id, kind=kind, grid=density / total)


def spatial_kde_map(
    chains: list[ChainPoint],
    out_size: tuple[int, int],
    bandwidth: tuple[float, float] | None = None,
    final_iteration: int = 20,
    image_id: str | None = None,
) -> SelectivityMap:
    """KDE over the final-iteration points of reproduction chains."""
    finals = [c for c in chains if c.iteration == final_iteration]
    if not finals:
        raise EstimatorError(f"no chain points at final iteration {final_iteration}")
    pts = np.array([[c.x, c.y] for c in finals])
    return kde_map(
        pts,
        out_size,
        bandwidth,
        image_id=_image_id_of(finals, image_id),
        kind=MapKind.SPATIAL_KDE,
    )


def fixation_map(
    fixations: list[Fixation],
    task: str,
    out_size: tuple[int, int],
    bandwidth: tuple[float, float] | None = None,
    image_id: str | None = None,
) -> SelectivityMap:
    """KDE over the fixations recorded for one viewing task."""
    if task not in TASK_KINDS:
        raise EstimatorError(f"unknown fixation task {task!r}")
    selected = [f for f in fixations if f.task == task]
    if not selected:
        raise EstimatorError(f"no fixations for task {task!r}")
    pts = np.array([[f.x, f.y] for f in selected])
    return kde_map(
        pts,
        out_size,
        bandwidth,
        image_id=_image_id_of(selected, image_id),
        kind=TASK_KINDS[task],
    )
