from .graph import ModelGraph, load_model, rank_of_class
from .preprocess import PreprocessConfig, load_image, preprocess
from .selw import read_selw, write_selw
from ..layers import INPUT_NODE, LayerKind, LayerSpec

__all__ = [
    "INPUT_NODE",
    "LayerKind",
    "LayerSpec",
    "ModelGraph",
    "PreprocessConfig",
    "load_image",
    "load_model",
    "preprocess",
    "rank_of_class",
    "read_selw",
    "write_selw",
]
