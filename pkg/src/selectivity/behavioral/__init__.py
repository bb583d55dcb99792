from .estimators import (
    dprime_grid,
    dprime_map,
    dprime_point,
    fixation_map,
    kde_map,
    patch_map,
    silverman_bandwidth,
    spatial_kde_map,
)
from .human_pc import (
    DEFAULT_PC_SIZE,
    FIXATION_DOWNWEIGHT,
    HumanPCModel,
    fit_human_pc,
    project_human_pc,
)
from .records import (
    ChainPoint,
    DiscriminationTrial,
    Fixation,
    PatchRating,
    by_image,
    load_chains,
    load_discrimination,
    load_fixations,
    load_patch_ratings,
    unit_groups,
)

__all__ = [
    "ChainPoint",
    "DEFAULT_PC_SIZE",
    "DiscriminationTrial",
    "FIXATION_DOWNWEIGHT",
    "Fixation",
    "HumanPCModel",
    "PatchRating",
    "by_image",
    "dprime_grid",
    "dprime_map",
    "dprime_point",
    "fit_human_pc",
    "fixation_map",
    "kde_map",
    "load_chains",
    "load_discrimination",
    "load_fixations",
    "load_patch_ratings",
    "patch_map",
    "project_human_pc",
    "silverman_bandwidth",
    "spatial_kde_map",
    "unit_groups",
]
