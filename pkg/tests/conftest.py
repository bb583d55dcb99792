"""Shared helpers: in-memory model graphs without manifest/weight files."""

import numpy as np
import pytest

from selectivity.layers import LayerKind, LayerSpec, _pair, infer_shapes
from selectivity.model.graph import ModelGraph
from selectivity.model.preprocess import PreprocessConfig


def build_graph(layers, params, input_shape, class_labels=None, target_layer=None):
    """Assemble a ModelGraph straight from specs + per-layer param dicts.

    ``params`` maps layer name -> {role: array}; tensor names in the weight
    store are synthesized as "<layer>.<role>".
    """
    layers = tuple(layers)
    weight_shapes = {}
    for layer in layers:
        for role, tname in layer.weights.items():
            weight_shapes[tname] = params[layer.name][role].shape
    shapes = infer_shapes(tuple(input_shape), layers, weight_shapes)
    if target_layer is None:
        target_layer = next(
            (l.name for l in reversed(layers) if l.kind is LayerKind.CONV2D), None
        )
    c = input_shape[0] if len(input_shape) == 3 else 1
    return ModelGraph(
        input_shape=tuple(input_shape),
        layers=layers,
        params={k: dict(v) for k, v in params.items()},
        node_shapes=tuple(shapes),
        class_labels=class_labels,
        target_layer=target_layer,
        preprocess=PreprocessConfig(
            size=input_shape[-2:], mean=(0.0,) * c, std=(1.0,) * c, channels=c
        ),
    )


def layer(name, kind, **kw):
    kw.setdefault("input", None)
    for key in ("kernel", "stride", "padding"):
        if kw.get(key) is not None:
            kw[key] = _pair(kw[key], key, name)
    return LayerSpec(name=name, kind=kind, **kw)


@pytest.fixture
def tiny_conv_model():
    """2-class conv net: conv(2ch) -> relu -> pool -> conv(3ch) -> relu -> gap
    -> flatten -> linear -> softmax, on 1x8x8 inputs."""
    rng = np.random.default_rng(11)
    layers = (
        layer("conv1", LayerKind.CONV2D, kernel=(3, 3), stride=(1, 1), padding=(1, 1),
              weights={"weight": "conv1.weight", "bias": "conv1.bias"}),
        layer("relu1", LayerKind.RELU),
        layer("pool1", LayerKind.MAXPOOL2D, kernel=(2, 2), stride=(2, 2)),
        layer("conv2", LayerKind.CONV2D, kernel=(3, 3), stride=(1, 1), padding=(1, 1),
              weights={"weight": "conv2.weight", "bias": "conv2.bias"}),
        layer("relu2", LayerKind.RELU),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("flatten", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.weight", "bias": "fc.bias"}),
        layer("probs", LayerKind.SOFTMAX),
    )
    params = {
        "conv1": {"weight": rng.standard_normal((2, 1, 3, 3)) * 0.5,
                  "bias": rng.standard_normal(2) * 0.1},
        "conv2": {"weight": rng.standard_normal((3, 2, 3, 3)) * 0.5,
                  "bias": rng.standard_normal(3) * 0.1},
        "fc": {"weight": rng.standard_normal((2, 3)) * 0.5,
               "bias": rng.standard_normal(2) * 0.1},
    }
    return build_graph(layers, params, (1, 8, 8), class_labels=("a", "b"))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
