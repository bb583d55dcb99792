"""Gradient- and activation-based attention maps for a classifier.

Six methods: vanilla gradients, guided backpropagation (GBP), GBP times the
normalized input, SmoothGrad over GBP, Grad-CAM, and Score-CAM. Each takes a
preprocessed input tensor and returns a SelectivityMap at the input's spatial
size, min-max normalized to [0, 1].

All methods attribute the raw logit of the requested class (softmax is never
part of the backward path); when ``class_index`` is omitted the model's own
top-1 class is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.ops import GateMode
from .errors import GraphError
from .grids import bilinear_resize, minmax_normalize
from .maps import MapKind, SelectivityMap, normalized_map
from .model.graph import ModelGraph
from .layers import LayerKind


@dataclass(frozen=True)
class SmoothGradConfig:
    sample_count: int = 30
    noise_level: float = 0.10     # fraction of the input's value range
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")
        if not 0.0 <= self.noise_level < 1.0:
            raise ValueError(f"noise_level must be in [0, 1), got {self.noise_level}")


def channel_reduce(raw: np.ndarray, image_id: str = "", kind: MapKind = MapKind.VANILLA_GRAD) -> SelectivityMap:
    """Collapse a C×H×W attribution to a 2-D map: per-pixel mean |value|,
    then min-max normalized."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[0] < 1:
        raise ValueError(f"expected a CxHxW tensor, got shape {raw.shape}")
    return normalized_map(image_id, kind, np.abs(raw).mean(axis=0))


def _resolve_class(model: ModelGraph, x: np.ndarray, class_index: int | None) -> int:
    if class_index is not None:
        if not 0 <= class_index < model.class_count:
            raise IndexError(
                f"class index {class_index} out of range for {model.class_count} classes"
            )
        return class_index
    logits, _ = model.predict(x)
    return int(np.argmax(logits))


def _logit_seed(model: ModelGraph, class_index: int) -> np.ndarray:
    seed = np.zeros(model.class_count)
    seed[class_index] = 1.0
    return seed


def input_gradient(
    model: ModelGraph, x: np.ndarray, class_index: int, gate: str = GateMode.STANDARD
) -> np.ndarray:
    """Raw d(logit_class)/d(input) tensor under the given ReLU gate."""
    tape = model.record_tape(x)
    return tape.backward(_logit_seed(model, class_index), gate, node=model.logits_node)


def vanilla_gradient(
    model: ModelGraph, x: np.ndarray, class_index: int | None = None, image_id: str = ""
) -> SelectivityMap:
    c = _resolve_class(model, x, class_index)
    grad = input_gradient(model, x, c, GateMode.STANDARD)
    return channel_reduce(grad, image_id, MapKind.VANILLA_GRAD)


def guided_backprop(
    model: ModelGraph, x: np.ndarray, class_index: int | None = None, image_id: str = ""
) -> SelectivityMap:
    c = _resolve_class(model, x, class_index)
    grad = input_gradient(model, x, c, GateMode.GUIDED_RELU)
    return channel_reduce(grad, image_id, MapKind.GBP)


def gbp_x_image(
    model: ModelGraph, x: np.ndarray, class_index: int | None = None, image_id: str = ""
) -> SelectivityMap:
    """Guided backprop scaled element-wise by the min-max-normalized input."""
    c = _resolve_class(model, x, class_index)
    grad = input_gradient(model, x, c, GateMode.GUIDED_RELU)
    x = np.asarray(x, dtype=np.float64)
    span = x.max() - x.min()
    norm_x = (x - x.min()) / span if span > 0 else np.zeros_like(x)
    return channel_reduce(grad * norm_x, image_id, MapKind.GBP_X_IMAGE)


def smoothgrad_gbp(
    model: ModelGraph,
    x: np.ndarray,
    class_index: int | None = None,
    cfg: SmoothGradConfig = SmoothGradConfig(),
    image_id: str = "",
) -> SelectivityMap:
    """Average guided-backprop attribution over noise-perturbed inputs.

    Noise is i.i.d. Gaussian with σ = noise_level × (max − min) of the input;
    samples are drawn serially from one seeded generator, so results are
    identical across runs and job counts.
    """
    c = _resolve_class(model, x, class_index)
    x = np.asarray(x, dtype=np.float64)
    sigma = cfg.noise_level * (x.max() - x.min())
    rng = np.random.default_rng(cfg.rng_seed)
    total = np.zeros_like(x)
    for _ in range(cfg.sample_count):
        noisy = x if sigma == 0.0 else x + rng.normal(0.0, sigma, size=x.shape)
        total += input_gradient(model, noisy, c, GateMode.GUIDED_RELU)
    return channel_reduce(total / cfg.sample_count, image_id, MapKind.SGBP)


def _conv_layer(model: ModelGraph, layer_name: str | None) -> str:
    name = layer_name if layer_name is not None else model.target_layer
    if name is None:
        raise GraphError("model has no convolutional layer to attribute at")
    for layer in model.layers:
        if layer.name == name:
            if layer.kind is not LayerKind.CONV2D:
                raise GraphError(f"layer {name!r} is {layer.kind.value}, not Conv2d")
            return name
    raise GraphError(f"no layer named {name!r} in model")


def _cam_finish(cam: np.ndarray, size: tuple[int, int], image_id: str, kind: MapKind) -> SelectivityMap:
    cam = np.where(cam > 0, cam, 0.0)
    up = bilinear_resize(cam, size[0], size[1])
    return normalized_map(image_id, kind, up)


def grad_cam(
    model: ModelGraph,
    x: np.ndarray,
    class_index: int | None = None,
    layer_name: str | None = None,
    image_id: str = "",
) -> SelectivityMap:
    """Activation maps weighted by their spatially averaged gradients."""
    name = _conv_layer(model, layer_name)
    c = _resolve_class(model, x, class_index)
    tape = model.record_tape(x)
    tape.backward(_logit_seed(model, c), GateMode.STANDARD, node=model.logits_node)
    acts = tape.value_at(name)
    grads = tape.gradient_at(name)
    alpha = grads.mean(axis=(1, 2))
    cam = np.tensordot(alpha, acts, axes=1)
    return _cam_finish(cam, model.input_shape[1:], image_id, MapKind.GRAD_CAM)


def score_cam(
    model: ModelGraph,
    x: np.ndarray,
    class_index: int | None = None,
    layer_name: str | None = None,
    image_id: str = "",
) -> SelectivityMap:
    """Activation maps weighted by the class probability under activation
    masking.

    Each activation map is normalized to [0,1], upsampled, and multiplied
    into the input; the softmax probability of the target class on that
    masked input is the map's weight. Weights are accumulated in channel
    order, so the result does not depend on evaluation scheduling.
    """
    name = _conv_layer(model, layer_name)
    c = _resolve_class(model, x, class_index)
    x = np.asarray(x, dtype=np.float64)
    tape = model.record_tape(x)
    acts = tape.value_at(name)
    h, w = model.input_shape[1:]
    cam = np.zeros(acts.shape[1:])
    for k in range(acts.shape[0]):
        mask, degenerate = minmax_normalize(acts[k])
        if degenerate:
            mask = np.zeros_like(acts[k])
        up = bilinear_resize(mask, h, w)
        _, probs = model.predict(x * up[None, :, :])
        cam += float(probs[c]) * acts[k]
    return _cam_finish(cam, (h, w), image_id, MapKind.SCORE_CAM)
