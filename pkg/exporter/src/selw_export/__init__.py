"""Checkpoint exporter for the SELW weight container.

Converts torch checkpoints of a few small supported architectures into the
SELW + JSON-manifest pair the inference engine loads, and emits forward-pass
parity fixtures (random inputs with the framework's logits).
"""

from .archs import ARCH_IDS, REGISTRY, Architecture, BasicBlock
from .errors import ExportError
from .export import (
    ExportReport,
    emit_fixture,
    export_checkpoint,
    export_module,
    framework_logits,
)
from .selw import read_selw, write_selw

__all__ = [
    "ARCH_IDS",
    "REGISTRY",
    "Architecture",
    "BasicBlock",
    "ExportError",
    "ExportReport",
    "emit_fixture",
    "export_checkpoint",
    "export_module",
    "framework_logits",
    "read_selw",
    "write_selw",
]
