"""Checkpoint-to-SELW conversion and parity fixtures.

The exporter walks a torch module tree in execution order and emits, for each
supported op, one manifest layer plus its weight tensors. Manifest layer names
are short and kind-based (conv1, bn1, fc1, ...); the report keeps the table
from framework state-dict keys to SELW tensor names so nothing gets lost in
translation.

Supported ops: Conv2d (groups=1, unit dilation), ReLU, MaxPool2d, BatchNorm2d
(exported as explicit gamma/beta/mean/var tensors — never fused into the
preceding conv, so the downstream math stays auditable), AdaptiveAvgPool2d(1),
Flatten, Linear, Softmax, Sequential nesting, and the BasicBlock residual
block from :mod:`.archs`. Dropout and Identity are inference no-ops and are
skipped. Anything else raises ExportError naming the op.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
import torch.nn as nn

from .archs import REGISTRY, Architecture, BasicBlock
from .errors import ExportError
from .selw import read_selw, write_selw

INPUT_NODE = "input"

# manifest kinds that carry a geometry block or weights, mirrored from the
# engine's loading rules so validation here matches validation there
_ROLE_KEYS = {
    "Conv2d": ("weight",),
    "Linear": ("weight",),
    "BatchNormInfer": ("gamma", "beta", "mean", "var"),
}
_KNOWN_KINDS = {
    "Conv2d", "ReLU", "MaxPool2d", "BatchNormInfer", "Add",
    "GlobalAvgPool", "Flatten", "Linear", "Softmax",
}


@dataclass(frozen=True)
class ExportReport:
    """What an export produced: sizes, the name translation table, artifacts."""

    tensor_count: int
    total_parameters: int
    mapping: tuple[tuple[str, str], ...]   # (framework name, SELW name)
    manifest_path: Path | None = None
    weights_path: Path | None = None
    fixture_path: Path | None = None

    def summary(self) -> str:
        lines = [
            f"tensors:    {self.tensor_count}",
            f"parameters: {self.total_parameters}",
        ]
        if self.weights_path is not None:
            lines.append(f"weights:    {self.weights_path}")
        if self.manifest_path is not None:
            lines.append(f"manifest:   {self.manifest_path}")
        if self.fixture_path is not None:
            lines.append(f"fixture:    {self.fixture_path}")
        width = max(len(fw) for fw, _ in self.mapping) if self.mapping else 0
        lines += [f"  {fw:<{width}} -> {selw}" for fw, selw in self.mapping]
        return "\n".join(lines)


def _int_pair(value: Any) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    return (int(value[0]), int(value[1]))


def _geometry(value: tuple[int, int]) -> Any:
    # manifests use a bare int for square geometry, a pair otherwise
    return value[0] if value[0] == value[1] else list(value)


class _Walk:
    """Accumulates manifest layers, weight tensors, and the name mapping."""

    def __init__(self) -> None:
        self.layers: list[dict[str, Any]] = []
        self.tensors: dict[str, np.ndarray] = {}
        self.mapping: list[tuple[str, str]] = []
        self.counts: dict[str, int] = {}
        self.prev = INPUT_NODE
        # conv whose activations the CAM methods read: the engine requires a
        # Conv2d here, so residual blocks target their last main-path conv
        # rather than a projection shortcut or the post-skip activation
        self.target: str | None = None

    def fresh(self, tag: str) -> str:
        self.counts[tag] = self.counts.get(tag, 0) + 1
        return f"{tag}{self.counts[tag]}"

    def emit(self, entry: dict[str, Any]) -> str:
        self.layers.append(entry)
        self.prev = entry["name"]
        return self.prev

    def grab(self, selw_name: str, fw_name: str, value: torch.Tensor) -> str:
        self.tensors[selw_name] = value.detach().cpu().numpy().astype(np.float32)
        self.mapping.append((fw_name, selw_name))
        return selw_name

    # -- per-op emitters ------------------------------------------------

    def conv(self, path: str, m: nn.Conv2d, input_node: str | None = None,
             track: bool = True) -> str:
        if m.groups != 1:
            raise ExportError(f"{path}: grouped convolution (groups={m.groups}) is not supported")
        if _int_pair(m.dilation) != (1, 1):
            raise ExportError(f"{path}: dilated convolution is not supported")
        if m.padding_mode != "zeros" or isinstance(m.padding, str):
            raise ExportError(f"{path}: only explicit zero padding is supported")
        name = self.fresh("conv")
        entry: dict[str, Any] = {"name": name, "kind": "Conv2d", "kernel": _geometry(_int_pair(m.kernel_size))}
        if input_node is not None:
            entry["input"] = input_node
        stride = _int_pair(m.stride)
        if stride != (1, 1):
            entry["stride"] = _geometry(stride)
        padding = _int_pair(m.padding)
        if padding != (0, 0):
            entry["padding"] = _geometry(padding)
        entry["weights"] = self.grab(f"{name}.w", f"{path}.weight", m.weight)
        if m.bias is not None:
            entry["bias"] = self.grab(f"{name}.b", f"{path}.bias", m.bias)
        if track:
            self.target = name
        return self.emit(entry)

    def bn(self, path: str, m: nn.BatchNorm2d) -> str:
        if not m.affine or not m.track_running_stats:
            raise ExportError(f"{path}: batch norm must be affine with tracked running stats")
        name = self.fresh("bn")
        return self.emit({
            "name": name,
            "kind": "BatchNormInfer",
            "weights": {
                "gamma": self.grab(f"{name}.gamma", f"{path}.weight", m.weight),
                "beta": self.grab(f"{name}.beta", f"{path}.bias", m.bias),
                "mean": self.grab(f"{name}.mean", f"{path}.running_mean", m.running_mean),
                "var": self.grab(f"{name}.var", f"{path}.running_var", m.running_var),
            },
            "eps": float(m.eps),
        })

    def relu(self) -> str:
        return self.emit({"name": self.fresh("relu"), "kind": "ReLU"})

    def pool(self, path: str, m: nn.MaxPool2d) -> str:
        if m.dilation not in (1, (1, 1)):
            raise ExportError(f"{path}: dilated max pooling is not supported")
        if m.ceil_mode:
            raise ExportError(f"{path}: ceil_mode max pooling is not supported")
        kernel = _int_pair(m.kernel_size)
        stride = _int_pair(m.stride if m.stride is not None else m.kernel_size)
        entry = {"name": self.fresh("pool"), "kind": "MaxPool2d",
                 "kernel": _geometry(kernel), "stride": _geometry(stride)}
        padding = _int_pair(m.padding)
        if padding != (0, 0):
            entry["padding"] = _geometry(padding)
        return self.emit(entry)

    def linear(self, path: str, m: nn.Linear) -> str:
        name = self.fresh("fc")
        entry: dict[str, Any] = {"name": name, "kind": "Linear"}
        entry["weights"] = self.grab(f"{name}.w", f"{path}.weight", m.weight)
        if m.bias is not None:
            entry["bias"] = self.grab(f"{name}.b", f"{path}.bias", m.bias)
        return self.emit(entry)

    def basic_block(self, path: str, m: BasicBlock) -> str:
        entry_node = self.prev
        self.conv(f"{path}.conv1", m.conv1)
        self.bn(f"{path}.bn1", m.bn1)
        self.relu()
        self.conv(f"{path}.conv2", m.conv2)
        self.bn(f"{path}.bn2", m.bn2)
        main = self.prev
        if m.downsample is not None:
            self.conv(f"{path}.downsample.0", m.downsample[0], input_node=entry_node, track=False)
            skip = self.bn(f"{path}.downsample.1", m.downsample[1])
        else:
            skip = entry_node
        self.emit({"name": self.fresh("add"), "kind": "Add", "input": main, "source": skip})
        return self.relu()

    def module(self, path: str, m: nn.Module) -> None:
        if isinstance(m, nn.Sequential):
            for child_name, child in m.named_children():
                self.module(f"{path}.{child_name}" if path else child_name, child)
        elif isinstance(m, BasicBlock):
            self.basic_block(path, m)
        elif isinstance(m, nn.Conv2d):
            self.conv(path, m)
        elif isinstance(m, nn.BatchNorm2d):
            self.bn(path, m)
        elif isinstance(m, nn.ReLU):
            self.relu()
        elif isinstance(m, nn.MaxPool2d):
            self.pool(path, m)
        elif isinstance(m, nn.AdaptiveAvgPool2d):
            if _int_pair(m.output_size if m.output_size is not None else 0) != (1, 1):
                raise ExportError(f"{path}: adaptive average pooling only supported to 1x1 output")
            self.emit({"name": self.fresh("gap"), "kind": "GlobalAvgPool"})
        elif isinstance(m, nn.Flatten):
            if m.start_dim != 1 or m.end_dim != -1:
                raise ExportError(f"{path}: Flatten must span all non-batch dims")
            self.emit({"name": self.fresh("flatten"), "kind": "Flatten"})
        elif isinstance(m, nn.Linear):
            self.linear(path, m)
        elif isinstance(m, nn.Softmax):
            if m.dim not in (1, -1):
                raise ExportError(f"{path}: Softmax must act on the class dim")
            self.emit({"name": self.fresh("softmax"), "kind": "Softmax"})
        elif isinstance(m, (nn.Dropout, nn.Identity)):
            pass                       # inference no-ops
        else:
            raise ExportError(f"unsupported op {type(m).__name__} at {path or '<root>'}")


def export_module(
    module: nn.Module,
    input_shape: tuple[int, int, int],
    *,
    class_labels: list[str] | None = None,
    preprocess: dict[str, Any] | None = None,
) -> tuple[dict[str, Any], dict[str, np.ndarray], list[tuple[str, str]]]:
    """Convert a supported torch module into (manifest, tensors, name mapping).

    A trailing Softmax layer is appended to the manifest when the module does
    not end in one, so the exported graph always produces probabilities.
    """
    walk = _Walk()
    walk.module("", module)
    if not walk.layers:
        raise ExportError("module contains no exportable layers")
    if walk.layers[-1]["kind"] != "Softmax":
        walk.emit({"name": walk.fresh("softmax"), "kind": "Softmax"})

    manifest: dict[str, Any] = {
        "input_shape": list(input_shape),
        "layers": walk.layers,
    }
    if class_labels is not None:
        manifest["class_labels"] = list(class_labels)
    if walk.target is not None:
        manifest["target_layer"] = walk.target
    if preprocess is not None:
        manifest["preprocess"] = preprocess
    _validate(manifest, walk.tensors)
    return manifest, walk.tensors, walk.mapping


def _validate(manifest: dict[str, Any], tensors: dict[str, np.ndarray]) -> None:
    """Structural checks matching the inference engine's loading rules."""
    seen = {INPUT_NODE}
    for entry in manifest["layers"]:
        name, kind = entry["name"], entry["kind"]
        if kind not in _KNOWN_KINDS:
            raise ExportError(f"layer {name!r}: unknown kind {kind!r}")
        if name in seen:
            raise ExportError(f"duplicate layer name {name!r}")
        for ref_key in ("input", "source"):
            ref = entry.get(ref_key)
            if ref is not None and ref not in seen:
                raise ExportError(f"layer {name!r}: {ref_key} {ref!r} does not name an earlier node")
        if kind == "Add" and "source" not in entry:
            raise ExportError(f"layer {name!r}: Add requires a source node")
        if kind in ("Conv2d", "MaxPool2d") and "kernel" not in entry:
            raise ExportError(f"layer {name!r}: {kind} requires a kernel")
        refs = {}
        raw = entry.get("weights")
        if isinstance(raw, str):
            refs["weight"] = raw
        elif isinstance(raw, dict):
            refs.update(raw)
        if "bias" in entry:
            refs["bias"] = entry["bias"]
        for role in _ROLE_KEYS.get(kind, ()):
            if role not in refs:
                raise ExportError(f"layer {name!r}: kind {kind} requires weight role {role!r}")
        for role, tensor_name in refs.items():
            if tensor_name not in tensors:
                raise ExportError(
                    f"layer {name!r}: weight role {role!r} references missing tensor {tensor_name!r}"
                )
        seen.add(name)
    target = manifest.get("target_layer")
    if target is not None and target not in seen:
        raise ExportError(f"target_layer {target!r} does not name a layer")


def _resolve_arch(architecture_id: str) -> Architecture:
    try:
        return REGISTRY[architecture_id]
    except KeyError:
        known = ", ".join(REGISTRY)
        raise ExportError(f"unknown architecture {architecture_id!r} (supported: {known})") from None


def _load_state_dict(checkpoint_path: Path) -> dict[str, torch.Tensor]:
    try:
        payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"{checkpoint_path}: cannot read checkpoint: {exc}") from exc
    if isinstance(payload, dict) and "state_dict" in payload:
        payload = payload["state_dict"]     # common trainer wrapper
    if not isinstance(payload, dict) or not all(isinstance(v, torch.Tensor) for v in payload.values()):
        raise ExportError(f"{checkpoint_path}: checkpoint is not a state dict of tensors")
    return payload


def _infer_num_classes(state: dict[str, torch.Tensor]) -> int:
    # the final classifier weight is the last 2-D tensor in registration order
    two_d = [v for v in state.values() if v.ndim == 2]
    if not two_d:
        raise ExportError("checkpoint has no 2-D classifier weight; cannot infer class count")
    return int(two_d[-1].shape[0])


def export_checkpoint(
    checkpoint_path: str | Path,
    architecture_id: str,
    out_dir: str | Path,
    *,
    class_labels: list[str] | None = None,
    fixture_inputs: int = 0,
    fixture_seed: int = 0,
) -> ExportReport:
    """Export a torch checkpoint to ``out_dir``/model.{json,selw}.

    With ``fixture_inputs`` > 0 also writes fixture.selw holding that many
    random preprocessed inputs paired with the framework's logits.
    """
    arch = _resolve_arch(architecture_id)
    state = _load_state_dict(Path(checkpoint_path))
    num_classes = len(class_labels) if class_labels is not None else _infer_num_classes(state)
    module = arch.build(num_classes)
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise ExportError(f"checkpoint does not fit {architecture_id}: {exc}") from exc
    module.eval()

    labels = class_labels if class_labels is not None else [f"class_{i}" for i in range(num_classes)]
    manifest, tensors, mapping = export_module(
        module, arch.input_shape, class_labels=labels, preprocess=dict(arch.preprocess)
    )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights_path = out_dir / "model.selw"
    manifest_path = out_dir / "model.json"
    write_selw(weights_path, tensors)
    _verify_round_trip(weights_path, tensors)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

    fixture_path = None
    if fixture_inputs > 0:
        fixture_path = out_dir / "fixture.selw"
        emit_fixture(module, arch.input_shape, fixture_inputs, fixture_seed, fixture_path)

    return ExportReport(
        tensor_count=len(tensors),
        total_parameters=int(sum(t.size for t in tensors.values())),
        mapping=tuple(mapping),
        manifest_path=manifest_path,
        weights_path=weights_path,
        fixture_path=fixture_path,
    )


def _verify_round_trip(path: Path, source: dict[str, np.ndarray]) -> None:
    back = read_selw(path)
    if list(back) != list(source):
        raise ExportError(f"{path}: round-trip returned different tensor names")
    for name, arr in source.items():
        if back[name].shape != arr.shape or not np.array_equal(back[name], arr):
            raise ExportError(f"{path}: tensor {name!r} did not round-trip bit-exactly")


def framework_logits(module: nn.Module, x: np.ndarray) -> np.ndarray:
    """The source framework's logits for one unbatched float32 input."""
    module.eval()
    with torch.no_grad():
        out = module(torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))[None])
    return out[0].numpy().astype(np.float32)


def emit_fixture(
    module: nn.Module,
    input_shape: tuple[int, int, int],
    n_inputs: int,
    seed: int,
    path: str | Path,
) -> Path:
    """Write ``n_inputs`` random input/logit pairs as a SELW container.

    Tensors are named input_000/logits_000, ... — the same layout the engine's
    own fixture command uses, so either side can consume the other's files.
    Each forward pass is run twice and compared, which catches a module left
    in training mode (batch norm would drift between the two passes).
    """
    if n_inputs < 1:
        raise ExportError(f"fixture needs at least one input, got {n_inputs}")
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for i in range(n_inputs):
        x = rng.standard_normal(input_shape).astype(np.float32)
        logits = framework_logits(module, x)
        again = framework_logits(module, x)
        if not np.array_equal(logits, again):
            raise ExportError("logits changed between passes; module is not in inference mode")
        tensors[f"input_{i:03d}"] = x
        tensors[f"logits_{i:03d}"] = logits
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_selw(path, tensors)
    return path
