"""Supported source architectures, built as plain torch modules.

Only small, desk-scale variants are registered: the point of an export is a
checkpoint the inference engine can chew through in CPU seconds, not ImageNet
service. Dropout is deliberately absent everywhere — it is an inference no-op
and the exported graph is inference-only.

Classifier heads end at the logits; the exporter appends the trailing softmax
to the manifest itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import torch.nn as nn

CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)


class BasicBlock(nn.Module):
    """Two 3x3 conv+BN stages with an identity (or 1x1-projected) skip."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.relu1 = nn.ReLU()
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu2 = nn.ReLU()
        if stride != 1 or in_channels != out_channels:
            self.downsample: nn.Sequential | None = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.downsample = None

    def forward(self, x):
        out = self.bn2(self.conv2(self.relu1(self.bn1(self.conv1(x)))))
        skip = x if self.downsample is None else self.downsample(x)
        return self.relu2(out + skip)


def _alexnet_cifar(num_classes: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(16, 32, 3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(32, 48, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(48, 32, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(32, 32, 3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(32 * 2 * 2, 64),
        nn.ReLU(),
        nn.Linear(64, num_classes),
    )


def _vgg_bn_cifar(num_classes: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    channels = 3
    for step in (16, "M", 32, "M", 48, "M", 64, "M"):
        if step == "M":
            layers.append(nn.MaxPool2d(2))
        else:
            layers += [nn.Conv2d(channels, step, 3, padding=1), nn.BatchNorm2d(step), nn.ReLU()]
            channels = step
    layers += [
        nn.Flatten(),
        nn.Linear(64 * 2 * 2, 96),
        nn.ReLU(),
        nn.Linear(96, num_classes),
    ]
    return nn.Sequential(*layers)


def _resnet_basic_cifar(num_classes: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(3, 16, 3, padding=1, bias=False),
        nn.BatchNorm2d(16),
        nn.ReLU(),
        BasicBlock(16, 16),
        BasicBlock(16, 32, stride=2),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(32, num_classes),
    )


def _tiny_conv(num_classes: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(3, 8, 3, padding=1),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Conv2d(8, 16, 3, padding=1),
        nn.ReLU(),
        nn.AdaptiveAvgPool2d(1),
        nn.Flatten(),
        nn.Linear(16, num_classes),
    )


@dataclass(frozen=True)
class Architecture:
    arch_id: str
    input_shape: tuple[int, int, int]
    preprocess: dict[str, Any]
    build: Callable[[int], nn.Module]


def _cifar_arch(arch_id: str, build: Callable[[int], nn.Module]) -> Architecture:
    return Architecture(
        arch_id=arch_id,
        input_shape=(3, 32, 32),
        preprocess={"size": [32, 32], "mean": list(CIFAR_MEAN), "std": list(CIFAR_STD)},
        build=build,
    )


REGISTRY: dict[str, Architecture] = {
    a.arch_id: a
    for a in (
        _cifar_arch("alexnet-cifar", _alexnet_cifar),
        _cifar_arch("vgg-bn-cifar", _vgg_bn_cifar),
        _cifar_arch("resnet-basic-cifar", _resnet_basic_cifar),
        Architecture(
            arch_id="tiny-conv",
            input_shape=(3, 32, 32),
            preprocess={"size": [32, 32], "mean": [0.5, 0.5, 0.5], "std": [0.5, 0.5, 0.5]},
            build=_tiny_conv,
        ),
    )
}

ARCH_IDS = tuple(REGISTRY)
