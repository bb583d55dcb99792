"""Cross-engine checks: exported artifacts replayed through the inference engine.

The release-gate guarantee lives here: fixture logits from the source
framework must be reproduced by the engine within 1e-4 max abs on a net of
at most 100k parameters, and every weight must round-trip bit-exactly.
"""

import json

import numpy as np
import pytest
import torch
import torch.nn as nn

import selw_export as se
from selectivity.attribution import grad_cam, score_cam, vanilla_gradient
from selectivity.model.graph import load_model
from selectivity.model.selw import read_selw as primary_read_selw
from selectivity.model.selw import write_selw as primary_write_selw
from export_testkit import make_checkpoint


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'pass' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_primary_engine_reproduces_fixture_logits(tmp_path):
    """Release gate: cross-engine parity on a <=100k-parameter net."""
    ckpt, module = make_checkpoint(tmp_path, "vgg-bn-cifar", seed=5)
    report = se.export_checkpoint(
        ckpt, "vgg-bn-cifar", tmp_path / "out", fixture_inputs=8, fixture_seed=17
    )
    assert report.total_parameters <= 100_000

    model = load_model(report.manifest_path, report.weights_path)
    fixture = se.read_selw(report.fixture_path)
    worst = 0.0
    top1_agree = True
    for i in range(8):
        x = fixture[f"input_{i:03d}"]
        want = fixture[f"logits_{i:03d}"]
        logits, _ = model.predict(x.astype(np.float64))
        worst = max(worst, float(np.abs(logits - want).max()))
        top1_agree &= int(np.argmax(logits)) == int(np.argmax(want))

    state = {fw: t for fw, t in module.state_dict().items()}
    exported = se.read_selw(report.weights_path)
    bit_exact = all(
        np.array_equal(exported[selw], state[fw].numpy().astype(np.float32))
        for fw, selw in report.mapping
    )

    _report(
        "export-parity",
        worst < 1e-4 and top1_agree and bit_exact,
        f"{report.total_parameters} params, max |logit diff| {worst:.3e} "
        f"(budget 1e-4), top-1 agree {top1_agree}, weights bit-exact {bit_exact}",
    )


def test_primary_loader_accepts_every_architecture(tmp_path):
    for arch_id in se.ARCH_IDS:
        ckpt, _ = make_checkpoint(tmp_path, arch_id, seed=1)
        report = se.export_checkpoint(ckpt, arch_id, tmp_path / arch_id)
        model = load_model(report.manifest_path, report.weights_path)
        x = np.random.default_rng(0).standard_normal((3, 32, 32))
        logits, probs = model.predict(x)
        assert logits.shape == (10,), arch_id
        assert np.all(np.isfinite(logits)), arch_id
        assert probs.sum() == pytest.approx(1.0, abs=1e-12), arch_id


def test_residual_add_path_matches_framework(tmp_path):
    ckpt, module = make_checkpoint(tmp_path, "resnet-basic-cifar", seed=9)
    report = se.export_checkpoint(
        ckpt, "resnet-basic-cifar", tmp_path / "out", fixture_inputs=4, fixture_seed=2
    )
    model = load_model(report.manifest_path, report.weights_path)
    fixture = se.read_selw(report.fixture_path)
    for i in range(4):
        logits, _ = model.predict(fixture[f"input_{i:03d}"].astype(np.float64))
        assert np.abs(logits - fixture[f"logits_{i:03d}"]).max() < 1e-4


def test_exported_weights_survive_primary_reader(tmp_path):
    ckpt, _ = make_checkpoint(tmp_path, "resnet-basic-cifar")
    report = se.export_checkpoint(ckpt, "resnet-basic-cifar", tmp_path / "out")
    ours = se.read_selw(report.weights_path)
    theirs = primary_read_selw(report.weights_path)    # promotes to float64
    assert list(theirs) == list(ours)
    for name, arr in ours.items():
        assert np.array_equal(theirs[name], arr.astype(np.float64)), name


def test_primary_fixture_files_readable_here(tmp_path):
    rng = np.random.default_rng(7)
    tensors = {"input_000": rng.standard_normal((3, 4, 4)).astype(np.float32)}
    path = tmp_path / "f.selw"
    primary_write_selw(path, tensors)
    back = se.read_selw(path)
    assert np.array_equal(back["input_000"], tensors["input_000"])


def test_zero_input_bias_logits_agree_across_engines(tmp_path):
    torch.manual_seed(2)
    module = nn.Sequential(nn.Flatten(), nn.Linear(12, 5))
    manifest, tensors, _ = se.export_module(module, (3, 2, 2))
    (tmp_path / "model.json").write_text(json.dumps(manifest))
    se.write_selw(tmp_path / "model.selw", tensors)

    model = load_model(tmp_path / "model.json", tmp_path / "model.selw")
    logits, _ = model.predict(np.zeros((3, 2, 2)))
    bias = module[1].bias.detach().numpy().astype(np.float32)
    assert np.array_equal(logits, bias.astype(np.float64))


def test_exported_target_layer_drives_primary_attribution(tmp_path):
    ckpt, _ = make_checkpoint(tmp_path, "resnet-basic-cifar")
    report = se.export_checkpoint(ckpt, "resnet-basic-cifar", tmp_path / "out")
    model = load_model(report.manifest_path, report.weights_path)
    x = np.random.default_rng(3).standard_normal((3, 32, 32))
    for method in (vanilla_gradient, grad_cam, score_cam):
        grid = method(model, x).grid
        assert grid.shape == (32, 32)
        assert np.all(np.isfinite(grid)) and grid.min() >= 0.0
