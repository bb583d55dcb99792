"""Layer specifications, manifest parsing, and static shape inference.

A model is an ordered list of layers forming a DAG: each layer reads the
previous layer's output by default, or any earlier node named via ``input``;
``Add`` layers additionally read a ``source`` node (the skip branch). Node
names are layer names, plus the reserved name ``input`` for the network input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .errors import GraphError

INPUT_NODE = "input"


class LayerKind(str, Enum):
    CONV2D = "Conv2d"
    RELU = "ReLU"
    MAXPOOL2D = "MaxPool2d"
    BATCHNORM = "BatchNormInfer"
    ADD = "Add"
    GLOBAL_AVG_POOL = "GlobalAvgPool"
    FLATTEN = "Flatten"
    LINEAR = "Linear"
    SOFTMAX = "Softmax"


# weight roles each kind must resolve in the weight store
WEIGHT_ROLES = {
    LayerKind.CONV2D: ("weight",),
    LayerKind.LINEAR: ("weight",),
    LayerKind.BATCHNORM: ("gamma", "beta", "mean", "var"),
}


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a model graph.

    ``weights`` maps role names ("weight", "bias", "gamma", ...) to tensor
    names in the weight store. Geometry fields apply to conv/pool kinds only.
    """

    name: str
    kind: LayerKind
    input: str | None = None          # None = previous layer's output
    source: str | None = None         # Add: name of the skip-branch node
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    weights: Mapping[str, str] = field(default_factory=dict)
    eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.stride[0] < 1 or self.stride[1] < 1:
            raise GraphError(f"layer {self.name!r}: stride must be positive, got {self.stride}")
        if self.padding[0] < 0 or self.padding[1] < 0:
            raise GraphError(f"layer {self.name!r}: padding must be >= 0, got {self.padding}")
        if self.kernel is not None and (self.kernel[0] < 1 or self.kernel[1] < 1):
            raise GraphError(f"layer {self.name!r}: kernel must be positive, got {self.kernel}")
        if self.kind is LayerKind.ADD and self.source is None:
            raise GraphError(f"layer {self.name!r}: Add requires a source node")


def _pair(value: Any, what: str, layer: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise GraphError(f"layer {layer!r}: {what} must be an int or a pair, got {value!r}")


def layer_from_manifest(obj: Mapping[str, Any], index: int) -> LayerSpec:
    """Build a LayerSpec from one JSON layer object."""
    name = obj.get("name", f"layer{index}")
    kind_str = obj.get("kind")
    try:
        kind = LayerKind(kind_str)
    except ValueError:
        known = ", ".join(k.value for k in LayerKind)
        raise GraphError(f"layer {name!r}: unknown kind {kind_str!r} (supported: {known})") from None

    weights: dict[str, str] = {}
    raw_weights = obj.get("weights")
    if isinstance(raw_weights, str):
        weights["weight"] = raw_weights
    elif isinstance(raw_weights, Mapping):
        weights.update({str(k): str(v) for k, v in raw_weights.items()})
    elif raw_weights is not None:
        raise GraphError(f"layer {name!r}: weights must be a name or a role->name object")
    if "bias" in obj and obj["bias"] is not None:
        weights["bias"] = str(obj["bias"])

    for role in WEIGHT_ROLES.get(kind, ()):
        if role not in weights:
            raise GraphError(f"layer {name!r}: kind {kind.value} requires weight role {role!r}")

    return LayerSpec(
        name=str(name),
        kind=kind,
        input=obj.get("input"),
        source=obj.get("source"),
        kernel=_pair(obj["kernel"], "kernel", name) if "kernel" in obj else None,
        stride=_pair(obj.get("stride", 1), "stride", name),
        padding=_pair(obj.get("padding", 0), "padding", name),
        weights=weights,
        eps=float(obj.get("eps", 1e-5)),
    )


def parse_manifest(path: str | Path) -> dict[str, Any]:
    """Load and structurally validate a model manifest JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphError(f"{path}: manifest root must be an object")
    if "input_shape" not in doc or "layers" not in doc:
        raise GraphError(f"{path}: manifest must declare input_shape and layers")
    shape = doc["input_shape"]
    if not (isinstance(shape, list) and len(shape) == 3 and all(int(d) > 0 for d in shape)):
        raise GraphError(f"{path}: input_shape must be [channels, height, width], got {shape!r}")
    return doc


def infer_shapes(
    input_shape: tuple[int, ...],
    layers: tuple[LayerSpec, ...],
    weight_shapes: Mapping[str, tuple[int, ...]],
) -> list[tuple[int, ...]]:
    """Derive every node's output shape, validating geometry and weights.

    Returns shapes for nodes 0..len(layers), node 0 being the input. Raises
    GraphError naming the offending layer on any inconsistency.
    """
    node_index: dict[str, int] = {INPUT_NODE: 0}
    shapes: list[tuple[int, ...]] = [tuple(input_shape)]

    def resolve(ref: str | None, layer: LayerSpec, default: int) -> int:
        if ref is None:
            return default
        if ref not in node_index:
            raise GraphError(f"layer {layer.name!r}: references unknown earlier node {ref!r}")
        return node_index[ref]

    def weight_shape(layer: LayerSpec, role: str) -> tuple[int, ...]:
        tname = layer.weights[role]
        if tname not in weight_shapes:
            raise GraphError(f"layer {layer.name!r}: missing tensor {tname!r} in weight store")
        return tuple(weight_shapes[tname])

    for i, layer in enumerate(layers):
        if layer.name in node_index:
            raise GraphError(f"duplicate layer name {layer.name!r}")
        prev = i  # node index of previous layer's output
        src = resolve(layer.input, layer, prev)
        in_shape = shapes[src]
        kind = layer.kind

        if kind is LayerKind.CONV2D:
            if len(in_shape) != 3:
                raise GraphError(f"layer {layer.name!r}: Conv2d needs a CxHxW input, got {in_shape}")
            wshape = weight_shape(layer, "weight")
            if len(wshape) != 4:
                raise GraphError(
                    f"layer {layer.name!r}: conv weight {layer.weights['weight']!r} must be "
                    f"4-D (out,in,kh,kw), got {wshape}"
                )
            co, ci, kh, kw = wshape
            if ci != in_shape[0]:
                raise GraphError(
                    f"layer {layer.name!r}: expected {in_shape[0]} input channels, "
                    f"weight has {ci}"
                )
            if layer.kernel is not None and layer.kernel != (kh, kw):
                raise GraphError(
                    f"layer {layer.name!r}: manifest kernel {layer.kernel} disagrees with "
                    f"weight kernel {(kh, kw)}"
                )
            if "bias" in layer.weights:
                bshape = weight_shape(layer, "bias")
                if bshape != (co,):
                    raise GraphError(
                        f"layer {layer.name!r}: bias shape {bshape} != ({co},)"
                    )
            out = _conv_out_shape(layer, in_shape, kh, kw, co)
        elif kind is LayerKind.MAXPOOL2D:
            if len(in_shape) != 3:
                raise GraphError(f"layer {layer.name!r}: MaxPool2d needs a CxHxW input, got {in_shape}")
            if layer.kernel is None:
                raise GraphError(f"layer {layer.name!r}: MaxPool2d requires a kernel")
            kh, kw = layer.kernel
            if layer.padding[0] >= kh or layer.padding[1] >= kw:
                raise GraphError(f"layer {layer.name!r}: pool padding must be < kernel")
            out = _conv_out_shape(layer, in_shape, kh, kw, in_shape[0])
        elif kind is LayerKind.RELU:
            out = in_shape
        elif kind is LayerKind.BATCHNORM:
            if len(in_shape) != 3:
                raise GraphError(f"layer {layer.name!r}: BatchNormInfer needs a CxHxW input")
            c = in_shape[0]
            for role in ("gamma", "beta", "mean", "var"):
                rshape = weight_shape(layer, role)
                if rshape != (c,):
                    raise GraphError(
                        f"layer {layer.name!r}: {role} shape {rshape} != ({c},)"
                    )
            out = in_shape
        elif kind is LayerKind.ADD:
            skip = resolve(layer.source, layer, prev)
            if skip >= i + 1 or src >= i + 1:
                raise GraphError(f"layer {layer.name!r}: Add may only reference earlier nodes")
            if shapes[skip] != in_shape:
                raise GraphError(
                    f"layer {layer.name!r}: Add operands differ: {in_shape} vs {shapes[skip]}"
                )
            out = in_shape
        elif kind is LayerKind.GLOBAL_AVG_POOL:
            if len(in_shape) != 3:
                raise GraphError(f"layer {layer.name!r}: GlobalAvgPool needs a CxHxW input")
            out = (in_shape[0],)
        elif kind is LayerKind.FLATTEN:
            n = 1
            for d in in_shape:
                n *= d
            out = (n,)
        elif kind is LayerKind.LINEAR:
            if len(in_shape) != 1:
                raise GraphError(
                    f"layer {layer.name!r}: Linear needs a flat input, got {in_shape} "
                    "(insert a Flatten)"
                )
            wshape = weight_shape(layer, "weight")
            if len(wshape) != 2 or wshape[1] != in_shape[0]:
                raise GraphError(
                    f"layer {layer.name!r}: linear weight {layer.weights['weight']!r} shape "
                    f"{wshape} incompatible with input {in_shape}"
                )
            if "bias" in layer.weights:
                bshape = weight_shape(layer, "bias")
                if bshape != (wshape[0],):
                    raise GraphError(f"layer {layer.name!r}: bias shape {bshape} != ({wshape[0]},)")
            out = (wshape[0],)
        elif kind is LayerKind.SOFTMAX:
            if len(in_shape) != 1:
                raise GraphError(f"layer {layer.name!r}: Softmax needs a flat input, got {in_shape}")
            out = in_shape
        else:  # pragma: no cover - enum is closed
            raise GraphError(f"layer {layer.name!r}: unhandled kind {kind}")

        node_index[layer.name] = i + 1
        shapes.append(out)
    return shapes


def _conv_out_shape(
    layer: LayerSpec, in_shape: tuple[int, ...], kh: int, kw: int, out_c: int
) -> tuple[int, int, int]:
    _, h, w = in_shape
    sh, sw = layer.stride
    ph, pw = layer.padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise GraphError(
            f"layer {layer.name!r}: kernel {(kh, kw)} with stride {layer.stride} and padding "
            f"{layer.padding} does not fit input {in_shape}"
        )
    return (out_c, ho, wo)
