"""Shared component across the six human map types.

The six maps of every image are resampled to a common size, each kind's
concatenation over images is z-scored, and the first principal component of
the resulting 6-column matrix gives one loading per kind. Because the three
fixation-derived maps are strongly intercorrelated, their loadings are
downweighted by sqrt(1/3) before maps are combined, and the component's sign
is fixed so the loadings sum positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import EstimatorError, ZeroVarianceError
from ..grids import bilinear_resize
from ..maps import FIXATION_KINDS, HUMAN_KINDS, MapKind, SelectivityMap, normalized_map

FIXATION_DOWNWEIGHT = math.sqrt(1.0 / 3.0)
DEFAULT_PC_SIZE = (100, 100)


@dataclass(frozen=True)
class HumanPCModel:
    kinds: tuple[MapKind, ...]
    loadings: tuple[float, ...]
    means: tuple[float, ...]      # z-score parameters per kind, over the
    stds: tuple[float, ...]       # full cross-image concatenation
    map_size: tuple[int, int]

    def __post_init__(self) -> None:
        n = len(self.kinds)
        if not (len(self.loadings) == len(self.means) == len(self.stds) == n):
            raise ValueError("loadings/means/stds must have one entry per kind")
        if any(s <= 0 for s in self.stds):
            raise ValueError(f"z-score stds must be positive, got {self.stds}")
        if all(v == 0 for v in self.loadings):
            raise ValueError("loadings are all zero")

    def to_json(self) -> str:
        doc = {
            "kinds": [k.value for k in self.kinds],
            "loadings": list(self.loadings),
            "means": list(self.means),
            "stds": list(self.stds),
            "map_size": list(self.map_size),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "HumanPCModel":
        doc = json.loads(text)
        return cls(
            kinds=tuple(MapKind(k) for k in doc["kinds"]),
            loadings=tuple(float(v) for v in doc["loadings"]),
            means=tuple(float(v) for v in doc["means"]),
            stds=tuple(float(v) for v in doc["stds"]),
            map_size=(int(doc["map_size"][0]), int(doc["map_size"][1])),
        )

    @classmethod
    def load(cls, path: str | Path) -> "HumanPCModel":
        return cls.from_json(Path(path).read_text())


def _resampled(smap: SelectivityMap, size: tuple[int, int]) -> np.ndarray:
    if smap.shape == size:
        return smap.grid
    return bilinear_resize(smap.grid, size[0], size[1])


def fit_human_pc(
    maps_by_kind: Mapping[MapKind, Sequence[SelectivityMap]],
    fixation_downweight: float = FIXATION_DOWNWEIGHT,
    map_size: tuple[int, int] = DEFAULT_PC_SIZE,
) -> HumanPCModel:
    """Fit loadings and z-score parameters from all images' maps.

    ``maps_by_kind`` must contain every one of the six kinds with the same
    image set. Raises ZeroVarianceError when a kind is constant across its
    whole concatenation (it cannot be z-scored).
    """
    for kind in HUMAN_KINDS:
        if kind not in maps_by_kind or not maps_by_kind[kind]:
            raise EstimatorError(f"missing maps for kind {kind.value!r}")
    id_sets = {
        kind: sorted(m.image_id for m in maps_by_kind[kind]) for kind in HUMAN_KINDS
    }
    reference = id_sets[HUMAN_KINDS[0]]
    for kind, ids in id_sets.items():
        if ids != reference:
            raise EstimatorError(
                f"kind {kind.value!r} covers images {ids}, expected {reference}"
            )

    columns = []
    means = []
    stds = []
    for kind in HUMAN_KINDS:
        ordered = sorted(maps_by_kind[kind], key=lambda m: m.image_id)
        col = np.concatenate([_resampled(m, map_size).ravel() for m in ordered])
        mu = float(col.mean())
        sd = float(col.std())
        if sd == 0:
            raise ZeroVarianceError(f"kind {kind.value!r} is constant; cannot z-score")
        columns.append((col - mu) / sd)
        means.append(mu)
        stds.append(sd)

    x = np.stack(columns, axis=1)
    cov = np.cov(x, rowvar=False)
    eigvals, eigvecs = np.linalg.eigh(cov)
    loadings = eigvecs[:, int(np.argmax(eigvals))].astype(np.float64)

    for i, kind in enumerate(HUMAN_KINDS):
        if kind in FIXATION_KINDS:
            loadings[i] *= fixation_downweight
    if loadings.sum() < 0:
        loadings = -loadings

    return HumanPCModel(
        kinds=HUMAN_KINDS,
        loadings=tuple(float(v) for v in loadings),
        means=tuple(means),
        stds=tuple(stds),
        map_size=map_size,
    )


def project_human_pc(
    model: HumanPCModel, maps_for_image: Mapping[MapKind, SelectivityMap]
) -> SelectivityMap:
    """Combine one image's six maps with the fitted loadings into a PC map."""
    image_id = ""
    combo = np.zeros(model.map_size)
    for i, kind in enumerate(model.kinds):
        smap = maps_for_image.get(kind)
        if smap is None:
            raise EstimatorError(f"missing map for kind {kind.value!r}")
        image_id = smap.image_id
        z = (_resampled(smap, model.map_size) - model.means[i]) / model.stds[i]
        combo += model.loadings[i] * z
    return normalized_map(image_id, MapKind.HUMAN_PC, combo)
