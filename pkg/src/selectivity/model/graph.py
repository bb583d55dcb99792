"""Immutable model graphs: loading, forward passes, and class ranking."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..engine.ops import softmax
from ..engine.tape import ComputationTape
from ..errors import GraphError
from ..layers import LayerKind, LayerSpec, infer_shapes, layer_from_manifest, parse_manifest
from .preprocess import PreprocessConfig, preprocess_config_from_manifest
from .selw import read_selw


@dataclass(frozen=True)
class ModelGraph:
    """A shape-checked layer graph with bound weights.

    Immutable after construction; forward passes are pure, so one graph can
    serve concurrent predictions.
    """

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    params: Mapping[str, Mapping[str, np.ndarray]]
    node_shapes: tuple[tuple[int, ...], ...]
    class_labels: tuple[str, ...] | None
    target_layer: str | None
    preprocess: PreprocessConfig

    @property
    def logits_node(self) -> int:
        """Index of the last node that is not a softmax output."""
        n = len(self.layers)
        while n > 0 and self.layers[n - 1].kind is LayerKind.SOFTMAX:
            n -= 1
        return n

    @property
    def class_count(self) -> int:
        shape = self.node_shapes[self.logits_node]
        if len(shape) != 1:
            raise GraphError(f"graph output {shape} is not a class vector")
        return shape[0]

    def record_tape(self, x: np.ndarray) -> ComputationTape:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise GraphError(f"input shape {x.shape} != model input {self.input_shape}")
        return ComputationTape.record(self.layers, self.params, x)

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Forward pass returning (logits, probabilities)."""
        tape = self.record_tape(x)
        logits = tape.node_values[self.logits_node]
        if self.logits_node == len(self.layers):
            probabilities = softmax(logits)
        else:
            probabilities = tape.output
        return logits, probabilities

    def label_of(self, class_index: int) -> str:
        if self.class_labels is not None and 0 <= class_index < len(self.class_labels):
            return self.class_labels[class_index]
        return str(class_index)


def rank_of_class(probabilities: np.ndarray, class_index: int) -> int:
    """1-based rank of a class in descending probability order.

    Ties rank the lower class index first, so over all classes the ranks are
    exactly the permutation {1..N}.
    """
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    if not 0 <= class_index < p.size:
        raise IndexError(f"class index {class_index} out of range for {p.size} classes")
    target = p[class_index]
    higher = int(np.sum(p > target))
    earlier_ties = int(np.sum(p[:class_index] == target))
    return higher + earlier_ties + 1


def _default_target_layer(layers: tuple[LayerSpec, ...]) -> str | None:
    last = None
    for layer in layers:
        if layer.kind is LayerKind.CONV2D:
            last = layer.name
    return last


def load_model(manifest_path: str | Path, weights_path: str | Path) -> ModelGraph:
    """Load and validate a manifest + SELW weight file pair."""
    doc = parse_manifest(manifest_path)
    layers = tuple(
        layer_from_manifest(obj, i) for i, obj in enumerate(doc["layers"])
    )
    input_shape = tuple(int(d) for d in doc["input_shape"])

    store = read_selw(weights_path)
    for layer in layers:
        for role, tname in layer.weights.items():
            if tname not in store:
                raise GraphError(
                    f"layer {layer.name!r}: weight file has no tensor {tname!r} (role {role})"
                )

    shapes = infer_shapes(input_shape, layers, {k: v.shape for k, v in store.items()})

    params = {
        layer.name: {role: store[tname] for role, tname in layer.weights.items()}
        for layer in layers
        if layer.weights
    }

    labels = doc.get("class_labels")
    if labels is not None:
        labels = tuple(str(s) for s in labels)

    target = doc.get("target_layer")
    if target is not None:
        names = {layer.name for layer in layers}
        if target not in names:
            raise GraphError(f"target_layer {target!r} names no layer in the manifest")
    else:
        target = _default_target_layer(layers)

    return ModelGraph(
        input_shape=input_shape,  # type: ignore[arg-type]
        layers=layers,
        params=params,
        node_shapes=tuple(shapes),
        class_labels=labels,
        target_layer=target,
        preprocess=preprocess_config_from_manifest(doc, input_shape),
    )
