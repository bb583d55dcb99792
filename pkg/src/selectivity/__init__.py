"""Selectivity-map toolkit: model attribution maps, human behavioral maps,
smoothing-optimized comparison, and masked-recognition evaluation."""

from .attribution import (
    SmoothGradConfig,
    channel_reduce,
    gbp_x_image,
    grad_cam,
    guided_backprop,
    score_cam,
    smoothgrad_gbp,
    vanilla_gradient,
)
from .compare import (
    ComparisonResult,
    SmoothingSearchConfig,
    bootstrap_human,
    gaussian_blur,
    optimal_smoothing,
    paired_t_test,
    pearson,
    variance_explained,
)
from .errors import (
    ComparisonError,
    EstimatorError,
    FormatError,
    GraphError,
    SchemaError,
    SelectivityError,
    ZeroVarianceError,
)
from .maps import (
    ATTRIBUTION_KINDS,
    HUMAN_KINDS,
    MapKind,
    SelectivityMap,
    read_selm,
    write_selm,
)
from .masking import (
    InverseRankResult,
    apply_mask,
    inverse_rank,
    make_incorrect_mask,
    recognition_dprime,
    run_masking_experiment,
    threshold_mask,
)
from .model import ModelGraph, load_model, preprocess, rank_of_class

__version__ = "0.1.0"

__all__ = [
    "ATTRIBUTION_KINDS",
    "ComparisonError",
    "ComparisonResult",
    "EstimatorError",
    "FormatError",
    "GraphError",
    "HUMAN_KINDS",
    "InverseRankResult",
    "MapKind",
    "ModelGraph",
    "SchemaError",
    "SelectivityError",
    "SelectivityMap",
    "SmoothGradConfig",
    "SmoothingSearchConfig",
    "ZeroVarianceError",
    "apply_mask",
    "bootstrap_human",
    "channel_reduce",
    "gaussian_blur",
    "gbp_x_image",
    "grad_cam",
    "guided_backprop",
    "inverse_rank",
    "load_model",
    "make_incorrect_mask",
    "optimal_smoothing",
    "paired_t_test",
    "pearson",
    "preprocess",
    "rank_of_class",
    "read_selm",
    "recognition_dprime",
    "run_masking_experiment",
    "score_cam",
    "smoothgrad_gbp",
    "threshold_mask",
    "vanilla_gradient",
    "variance_explained",
    "write_selm",
]
