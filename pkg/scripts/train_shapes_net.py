#!/usr/bin/env python3
"""Train the tiny three-class shapes net and refresh tests/fixtures/tinynet/.

Development aid only — the installed package never imports torch. Run from
the repository root with the package installed (pip install -e .):

    python3 scripts/train_shapes_net.py

Writes model.selw, model.json, images/*.png and labels.json under
tests/fixtures/tinynet/. The 24 fixture images come from a held-out seed,
so the accuracy printed for them is honest generalization, and the script
fails loudly if either train or fixture accuracy drops below par.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from selectivity.model.graph import load_model
from selectivity.model.preprocess import load_image, preprocess
from selectivity.model.selw import write_selw

CLASSES = ("circle", "square", "triangle")
SIZE = 48
PER_CLASS_FIXTURE = 8
FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "tinynet"


def render_shape(kind: str, rng: np.random.Generator) -> np.ndarray:
    """One bright shape on a dark noisy background, random pose and size."""
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    cy, cx = rng.uniform(14, 34, size=2)
    r = rng.uniform(7, 13)
    if kind == "circle":
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif kind == "square":
        inside = (np.abs(yy - cy) <= 0.9 * r) & (np.abs(xx - cx) <= 0.9 * r)
    else:  # triangle, apex up
        top = cy - r
        half_width = np.clip((yy - top) / 2.0, 0.0, None)
        inside = (yy >= top) & (yy <= cy + r) & (np.abs(xx - cx) <= half_width)
    img = rng.uniform(4, 26, size=(SIZE, SIZE))
    img[inside] = rng.uniform(165, 250) + rng.uniform(-12, 12, size=int(inside.sum()))
    return np.clip(np.round(img), 0, 255)


def make_batch(n_per_class: int, rng: np.random.Generator):
    rasters, labels = [], []
    for k, kind in enumerate(CLASSES):
        for _ in range(n_per_class):
            rasters.append(render_shape(kind, rng))
            labels.append(k)
    x = (np.stack(rasters) / 255.0 - 0.5) / 0.5
    return x[:, None, :, :].astype(np.float32), np.asarray(labels, dtype=np.int64)


def build_net() -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(1, 8, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(16, 16, 3, padding=1), nn.ReLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        nn.Linear(16, 3),
    )


def train(net: nn.Sequential, x: np.ndarray, y: np.ndarray, epochs: int = 60) -> float:
    opt = torch.optim.Adam(net.parameters(), lr=5e-3)
    loss_fn = nn.CrossEntropyLoss()
    xt, yt = torch.from_numpy(x), torch.from_numpy(y)
    for _ in range(epochs):
        perm = torch.randperm(len(xt))
        for i in range(0, len(xt), 128):
            idx = perm[i:i + 128]
            opt.zero_grad()
            loss_fn(net(xt[idx]), yt[idx]).backward()
            opt.step()
    net.eval()
    with torch.no_grad():
        acc = (net(xt).argmax(dim=1) == yt).float().mean().item()
    return acc


def export(net: nn.Sequential) -> None:
    conv1, _, _, conv2, _, _, conv3, _, _, _, fc = net
    tensors = {
        "c1.w": conv1.weight.detach().numpy(), "c1.b": conv1.bias.detach().numpy(),
        "c2.w": conv2.weight.detach().numpy(), "c2.b": conv2.bias.detach().numpy(),
        "c3.w": conv3.weight.detach().numpy(), "c3.b": conv3.bias.detach().numpy(),
        "fc.w": fc.weight.detach().numpy(), "fc.b": fc.bias.detach().numpy(),
    }
    manifest = {
        "input_shape": [1, SIZE, SIZE],
        "layers": [
            {"name": "c1", "kind": "Conv2d", "kernel": 3, "padding": 1,
             "weights": "c1.w", "bias": "c1.b"},
            {"name": "r1", "kind": "ReLU"},
            {"name": "p1", "kind": "MaxPool2d", "kernel": 2, "stride": 2},
            {"name": "c2", "kind": "Conv2d", "kernel": 3, "padding": 1,
             "weights": "c2.w", "bias": "c2.b"},
            {"name": "r2", "kind": "ReLU"},
            {"name": "p2", "kind": "MaxPool2d", "kernel": 2, "stride": 2},
            {"name": "c3", "kind": "Conv2d", "kernel": 3, "padding": 1,
             "weights": "c3.w", "bias": "c3.b"},
            {"name": "r3", "kind": "ReLU"},
            {"name": "gap", "kind": "GlobalAvgPool"},
            {"name": "fl", "kind": "Flatten"},
            {"name": "fc", "kind": "Linear",
             "weights": {"weight": "fc.w", "bias": "fc.b"}},
            {"name": "sm", "kind": "Softmax"},
        ],
        "class_labels": list(CLASSES),
        "target_layer": "c3",
        "preprocess": {"size": [SIZE, SIZE], "mean": [0.5], "std": [0.5]},
    }
    write_selw(FIXTURE / "model.selw", tensors)
    (FIXTURE / "model.json").write_text(json.dumps(manifest, indent=2) + "\n")


def write_fixture_images(rng: np.random.Generator) -> dict[str, str]:
    out = FIXTURE / "images"
    out.mkdir(parents=True, exist_ok=True)
    labels = {}
    for kind in CLASSES:
        for i in range(PER_CLASS_FIXTURE):
            image_id = f"{kind}{i:02d}"
            raster = render_shape(kind, rng).astype(np.uint8)
            Image.fromarray(raster, mode="L").save(out / f"{image_id}.png")
            labels[image_id] = kind
    (FIXTURE / "labels.json").write_text(json.dumps(labels, indent=2, sort_keys=True) + "\n")
    return labels


def engine_accuracy(labels: dict[str, str]) -> float:
    model = load_model(FIXTURE / "model.json", FIXTURE / "model.selw")
    hits = 0
    for image_id, kind in sorted(labels.items()):
        x = preprocess(load_image(FIXTURE / "images" / f"{image_id}.png"), model.preprocess)
        _, probs = model.predict(x)
        hits += model.label_of(int(np.argmax(probs))) == kind
    return hits / len(labels)


def main() -> int:
    torch.manual_seed(7)
    rng = np.random.default_rng(7)
    x, y = make_batch(300, rng)
    net = build_net()
    train_acc = train(net, x, y)
    print(f"train accuracy: {train_acc:.3f} on {len(y)} images")

    FIXTURE.mkdir(parents=True, exist_ok=True)
    export(net)
    labels = write_fixture_images(np.random.default_rng(2024))
    fixture_acc = engine_accuracy(labels)
    print(f"fixture accuracy (engine forward pass): {fixture_acc:.3f} on {len(labels)} images")

    if train_acc < 0.95 or fixture_acc < 0.9:
        print("accuracy below par; fixture not fit for use", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
