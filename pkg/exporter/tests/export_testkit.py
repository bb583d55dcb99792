"""Shared helpers for the exporter tests."""

import torch

import selw_export as se


def make_checkpoint(tmp_path, arch_id: str, num_classes: int = 10, seed: int = 0):
    """Build a seeded module of a registered architecture and save its state dict.

    Batch-norm running statistics are warmed up with a few training-mode
    batches first, so exported mean/var tensors carry real information rather
    than the 0/1 they are born with.
    """
    torch.manual_seed(seed)
    arch = se.REGISTRY[arch_id]
    module = arch.build(num_classes)
    if any(isinstance(m, torch.nn.BatchNorm2d) for m in module.modules()):
        module.train()
        with torch.no_grad():
            for _ in range(3):
                module(torch.randn(8, *arch.input_shape))
    module.eval()
    path = tmp_path / f"{arch_id}-{seed}.pt"
    torch.save(module.state_dict(), path)
    return path, module
