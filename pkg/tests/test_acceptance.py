"""Release gate: one test per published guarantee, each printing a single
pass/fail line with the measured numbers.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
land. Budgets are wall-clock on a single CPU.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from selectivity.attribution import (
    SmoothGradConfig,
    grad_cam,
    guided_backprop,
    score_cam,
    smoothgrad_gbp,
    vanilla_gradient,
)
from selectivity.behavioral.estimators import kde_map
from selectivity.behavioral.human_pc import HUMAN_KINDS, FIXATION_DOWNWEIGHT, fit_human_pc, project_human_pc
from selectivity.cli import main
from selectivity.compare import SmoothingSearchConfig, optimal_smoothing
from selectivity.engine import ComputationTape, finite_difference_gradient
from selectivity.grids import bilinear_resize, gaussian_blur, minmax_normalize
from selectivity.layers import LayerKind
from selectivity.maps import FIXATION_KINDS, MapKind, SelectivityMap, write_selm
from selectivity.masking import run_masking_experiment, threshold_mask
from selectivity.model.graph import load_model
from selectivity.model.preprocess import load_image, preprocess
from selectivity.sdt import dprime_from_rates
from conftest import build_graph, layer

TINYNET = Path(__file__).parent / "fixtures" / "tinynet"


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'pass' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# backward pass vs. finite differences on random graphs
# ---------------------------------------------------------------------------

def _random_pipeline(rng):
    c = int(rng.integers(1, 4))
    h = int(rng.integers(4, 8))
    w = int(rng.integers(4, 8))
    layers, params = [], {}
    total = int(rng.integers(1, 5))
    head = total >= 3 and rng.random() < 0.35
    spatial = total - 3 if head else total
    cur_c, cur_h, cur_w = c, h, w
    for j in range(spatial):
        op = str(rng.choice(["conv", "relu", "pool", "bn"]))
        name = f"{op}{j}"
        if op == "pool" and (cur_h < 2 or cur_w < 2):
            op = "relu"
        if op == "conv":
            k = int(rng.integers(1, min(3, cur_h, cur_w) + 1))
            pad = int(rng.integers(0, 2)) if k > 1 else 0
            co = int(rng.integers(1, 4))
            layers.append(layer(name, LayerKind.CONV2D, kernel=k, padding=pad,
                                weights={"weight": f"{name}.w", "bias": f"{name}.b"}))
            params[name] = {
                "weight": rng.standard_normal((co, cur_c, k, k)) * 0.6,
                "bias": rng.standard_normal(co) * 0.1,
            }
            cur_c = co
            cur_h += 2 * pad - k + 1
            cur_w += 2 * pad - k + 1
        elif op == "pool":
            layers.append(layer(name, LayerKind.MAXPOOL2D, kernel=2, stride=2))
            cur_h //= 2
            cur_w //= 2
        elif op == "bn":
            layers.append(layer(name, LayerKind.BATCHNORM, weights={
                "gamma": f"{name}.g", "beta": f"{name}.be",
                "mean": f"{name}.m", "var": f"{name}.v",
            }))
            params[name] = {
                "gamma": rng.uniform(0.5, 1.5, cur_c),
                "beta": rng.standard_normal(cur_c) * 0.2,
                "mean": rng.standard_normal(cur_c) * 0.2,
                "var": rng.uniform(0.3, 2.0, cur_c),
            }
        else:
            layers.append(layer(name, LayerKind.RELU))
    if head:
        out_dim = int(rng.integers(1, 4))
        layers.append(layer("gap", LayerKind.GLOBAL_AVG_POOL))
        layers.append(layer("fl", LayerKind.FLATTEN))
        layers.append(layer("fc", LayerKind.LINEAR,
                            weights={"weight": "fc.w", "bias": "fc.b"}))
        params["fc"] = {
            "weight": rng.standard_normal((out_dim, cur_c)) * 0.5,
            "bias": rng.standard_normal(out_dim) * 0.1,
        }
    return tuple(layers), params, (c, h, w)


def test_backward_matches_finite_differences_on_random_graphs():
    rng = np.random.default_rng(20240819)
    start = time.monotonic()
    worst = 0.0
    graphs = 0
    while graphs < 100:
        layers, params, shape = _random_pipeline(rng)
        if not layers:
            continue
        x = rng.standard_normal(shape)
        tape = ComputationTape.record(layers, params, x)
        seed = rng.standard_normal(tape.output.shape)
        grad = tape.backward(seed)

        def f(v):
            return float(np.sum(seed * ComputationTape.record(layers, params, v).output))

        fd = finite_difference_gradient(f, x)
        scale = max(float(np.abs(fd).max()), 1.0)
        worst = max(worst, float(np.abs(grad - fd).max()) / scale)
        graphs += 1
    elapsed = time.monotonic() - start
    _report(
        "gradient-oracle", worst < 1e-4 and elapsed < 30.0,
        f"{graphs} random graphs, max rel err {worst:.2e} (< 1e-4), "
        f"{elapsed:.1f}s (budget 30s)",
    )


# ---------------------------------------------------------------------------
# guided gate degenerates to the standard gate when it never fires
# ---------------------------------------------------------------------------

def test_guided_gate_collapses_to_vanilla_when_inactive():
    rng = np.random.default_rng(3)
    relu_free = (
        layer("c1", LayerKind.CONV2D, kernel=3, padding=1,
              weights={"weight": "c1.w", "bias": "c1.b"}),
        layer("bn", LayerKind.BATCHNORM, weights={
            "gamma": "g", "beta": "b", "mean": "m", "var": "v"}),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("fl", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.w"}),
    )
    params = {
        "c1": {"weight": rng.standard_normal((3, 2, 3, 3)),
               "bias": rng.standard_normal(3)},
        "bn": {"gamma": rng.uniform(0.5, 1.5, 3), "beta": rng.standard_normal(3),
               "mean": rng.standard_normal(3), "var": rng.uniform(0.5, 2.0, 3)},
        "fc": {"weight": rng.standard_normal((2, 3))},
    }
    model = build_graph(relu_free, params, (2, 6, 6))
    x = rng.standard_normal((2, 6, 6))
    free_equal = np.array_equal(
        vanilla_gradient(model, x, class_index=0).grid,
        guided_backprop(model, x, class_index=0).grid,
    )

    positive = (
        layer("c1", LayerKind.CONV2D, kernel=3, padding=1,
              weights={"weight": "c1.w", "bias": "c1.b"}),
        layer("r1", LayerKind.RELU),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("fl", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.w"}),
    )
    pos_params = {
        "c1": {"weight": rng.uniform(0.05, 0.5, (3, 1, 3, 3)),
               "bias": rng.uniform(0.1, 0.5, 3)},
        "fc": {"weight": rng.uniform(0.05, 0.5, (2, 3))},
    }
    pos_model = build_graph(positive, pos_params, (1, 6, 6))
    xp = rng.uniform(0.5, 1.5, (1, 6, 6))
    pos_equal = np.array_equal(
        vanilla_gradient(pos_model, xp, class_index=0).grid,
        guided_backprop(pos_model, xp, class_index=0).grid,
    )
    _report(
        "gate-identity", free_equal and pos_equal,
        f"bit-for-bit on relu-free net: {free_equal}; "
        f"on all-positive-activation net: {pos_equal}",
    )


# ---------------------------------------------------------------------------
# Grad-CAM on a GAP head equals the final-weight blend of activation maps
# ---------------------------------------------------------------------------

def test_gradcam_equals_final_weight_activation_blend():
    rng = np.random.default_rng(9)
    layers = (
        layer("conv", LayerKind.CONV2D, kernel=3, padding=1,
              weights={"weight": "c.w", "bias": "c.b"}),
        layer("relu", LayerKind.RELU),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("fl", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.w"}),
    )
    params = {
        # large bias keeps every conv output positive, so the relu never
        # clips and the gradient-derived channel weights reduce to the
        # final-layer weights themselves
        "conv": {"weight": rng.standard_normal((4, 1, 3, 3)) * 0.5,
                 "bias": rng.uniform(8.0, 10.0, 4)},
        "fc": {"weight": rng.standard_normal((3, 4))},
    }
    model = build_graph(layers, params, (1, 10, 10))
    x = rng.standard_normal((1, 10, 10))

    acts = model.record_tape(x).value_at("conv")
    assert acts.min() > 0  # setup precondition for the identity
    blend = np.tensordot(params["fc"]["weight"][0], acts, axes=1)
    expected, _ = minmax_normalize(bilinear_resize(np.where(blend > 0, blend, 0.0), 10, 10))

    got = grad_cam(model, x, class_index=0).grid
    err = float(np.abs(got - expected).max())
    _report("cam-equivalence", err < 1e-6, f"max abs diff {err:.2e} (< 1e-6)")


# ---------------------------------------------------------------------------
# Score-CAM equals a naive per-channel loop
# ---------------------------------------------------------------------------

def test_scorecam_equals_naive_loop_exactly():
    rng = np.random.default_rng(14)
    layers = (
        layer("conv", LayerKind.CONV2D, kernel=3, padding=1,
              weights={"weight": "c.w", "bias": "c.b"}),
        layer("relu", LayerKind.RELU),
        layer("gap", LayerKind.GLOBAL_AVG_POOL),
        layer("fl", LayerKind.FLATTEN),
        layer("fc", LayerKind.LINEAR, weights={"weight": "fc.w"}),
    )
    params = {
        "conv": {"weight": rng.standard_normal((2, 1, 3, 3)),
                 "bias": rng.standard_normal(2)},
        "fc": {"weight": rng.standard_normal((3, 2))},
    }
    model = build_graph(layers, params, (1, 8, 8))
    x = rng.standard_normal((1, 8, 8))

    acts = model.record_tape(x).value_at("conv")
    cam = np.zeros(acts.shape[1:])
    for k in range(acts.shape[0]):
        a = acts[k]
        mask = (a - a.min()) / (a.max() - a.min()) if a.max() > a.min() else np.zeros_like(a)
        up = bilinear_resize(mask, 8, 8)
        _, probs = model.predict(x * up[None])
        cam += float(probs[0]) * a
    cam = np.where(cam > 0, cam, 0.0)
    expected, _ = minmax_normalize(bilinear_resize(cam, 8, 8))

    got = score_cam(model, x, class_index=0).grid
    exact = np.array_equal(got, expected)
    _report("scorecam-oracle", exact, f"2-channel net, exact match: {exact}")


# ---------------------------------------------------------------------------
# normal quantile against a bisection-on-erf oracle
# ---------------------------------------------------------------------------

def _z_bisect(p: float) -> float:
    lo, hi = -10.0, 10.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if 0.5 * (1.0 + math.erf(mid / math.sqrt(2.0))) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_normal_quantile_matches_erf_bisection():
    from selectivity.sdt import z_quantile

    ps = np.linspace(1e-4, 1.0 - 1e-4, 101)
    worst = max(abs(z_quantile(float(p)) - _z_bisect(float(p))) for p in ps)
    d = dprime_from_rates(0.8, 0.2)
    d_err = abs(d - 1.68324)
    _report(
        "normal-quantile", worst < 1e-8 and d_err < 1e-4,
        f"max |dz| {worst:.2e} over {len(ps)} quantiles (< 1e-8); "
        f"d'(.8,.2) = {d:.5f} (±1e-4 of 1.68324)",
    )


# ---------------------------------------------------------------------------
# KDE maps carry unit mass
# ---------------------------------------------------------------------------

def test_kde_maps_integrate_to_one():
    rng = np.random.default_rng(6)
    worst = 0.0
    done = 0
    while done < 1000:
        h = int(rng.integers(8, 33))
        w = int(rng.integers(8, 33))
        n = int(rng.integers(1, 16))
        pts = np.column_stack([rng.uniform(0, w - 1, n), rng.uniform(0, h - 1, n)])
        bw = None if done % 2 == 0 else (float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3)))
        if bw is None and n >= 2 and (pts[:, 0].std() < 0.5 or pts[:, 1].std() < 0.5):
            # near-coincident points collapse the rule-of-thumb bandwidth and
            # the map is (correctly) refused; not a normalization case
            continue
        total = float(kde_map(pts, (h, w), bandwidth=bw).grid.sum())
        worst = max(worst, abs(total - 1.0))
        done += 1
    _report("kde-normalization", worst < 1e-6,
            f"1000 point sets, max |mass - 1| {worst:.2e} (< 1e-6)")


# ---------------------------------------------------------------------------
# reveal-half thresholding keeps exactly half the pixels
# ---------------------------------------------------------------------------

def test_threshold_reveals_exactly_half_the_pixels():
    rng = np.random.default_rng(8)
    counts = set()
    for i in range(20):
        if i % 2 == 0:
            grid = rng.uniform(0, 1, (100, 100))
        else:
            grid = rng.integers(0, 10, (100, 100)).astype(np.float64)  # heavy ties
        m = SelectivityMap(f"m{i}", MapKind.GBP, grid)
        counts.add(int(np.count_nonzero(threshold_mask(m, 0.5).grid)))
    _report("mask-support", counts == {5000},
            f"support sizes over 20 random 100x100 maps: {sorted(counts)} (want exactly 5000)")


# ---------------------------------------------------------------------------
# the smoothing search recovers a known blur scale
# ---------------------------------------------------------------------------

def test_smoothing_search_recovers_known_blur():
    rng = np.random.default_rng(1234)
    start = time.monotonic()
    ann = {
        f"i{k}": SelectivityMap(f"i{k}", MapKind.GBP, rng.uniform(0, 1, (100, 100)))
        for k in range(3)
    }
    recovered = {}
    for true in (2.0, 5.0, 10.0, 20.0):
        human = {
            i: SelectivityMap(i, MapKind.FREE_FIX, np.clip(gaussian_blur(m.grid, true), 0, None))
            for i, m in ann.items()
        }
        res = optimal_smoothing(ann, human, SmoothingSearchConfig(),
                                method_id="gbp", human_kind="free")
        recovered[true] = res.sigma_star
    elapsed = time.monotonic() - start
    ok = all(abs(s - t) <= 0.5 for t, s in recovered.items()) and elapsed < 120.0
    _report(
        "sigma-recovery", ok,
        f"true->found {sorted(recovered.items())} (tolerance ±0.5), "
        f"{elapsed:.1f}s (budget 120s)",
    )


# ---------------------------------------------------------------------------
# first shared component against a dense eigensolver
# ---------------------------------------------------------------------------

def test_first_component_matches_dense_eigensolver():
    rng = np.random.default_rng(17)
    size = (20, 20)
    ids = [f"im{k}" for k in range(4)]
    base = {i: rng.uniform(0, 1, size) for i in ids}
    maps_by_kind = {}
    for kind in HUMAN_KINDS:
        maps_by_kind[kind] = [
            SelectivityMap(i, kind, np.clip(base[i] + 0.4 * rng.uniform(0, 1, size), 0, None))
            for i in ids
        ]
    model = fit_human_pc(maps_by_kind, map_size=size)

    cols = []
    for kind in HUMAN_KINDS:
        col = np.concatenate(
            [m.grid.ravel() for m in sorted(maps_by_kind[kind], key=lambda m: m.image_id)]
        )
        cols.append((col - col.mean()) / col.std())
    x = np.stack(cols, axis=1)
    xc = x - x.mean(axis=0, keepdims=True)
    cov = xc.T @ xc / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eig(cov)
    top = np.real(eigvecs[:, int(np.argmax(np.real(eigvals)))])
    top = top / np.linalg.norm(top)
    for i, kind in enumerate(HUMAN_KINDS):
        if kind in FIXATION_KINDS:
            top[i] *= FIXATION_DOWNWEIGHT
    if top.sum() < 0:
        top = -top
    err = float(np.abs(np.asarray(model.loadings) - top).max())

    # degenerate one-component case: all six kinds identical per image makes
    # the projection a positive multiple of the shared field
    same = {kind: [SelectivityMap(i, kind, base[i]) for i in ids] for kind in HUMAN_KINDS}
    m1 = fit_human_pc(same, map_size=size)
    pc = project_human_pc(m1, {kind: same[kind][0] for kind in HUMAN_KINDS})
    want, _ = minmax_normalize(base[ids[0]])
    rank1_err = float(np.abs(pc.grid - want).max())

    ok = err < 1e-8 and rank1_err < 1e-10
    _report(
        "pca-oracle", ok,
        f"loadings vs dense eigensolver: max diff {err:.2e} (< 1e-8); "
        f"rank-1 projection vs shared field: {rank1_err:.2e}",
    )


# ---------------------------------------------------------------------------
# end to end: own masks preserve recognition better than donors' masks
# ---------------------------------------------------------------------------

def test_own_masks_beat_donor_masks_end_to_end():
    start = time.monotonic()
    model = load_model(TINYNET / "model.json", TINYNET / "model.selw")
    labels = json.loads((TINYNET / "labels.json").read_text())

    images, hits = {}, 0
    maps = {}
    for i, (image_id, label) in enumerate(sorted(labels.items())):
        raster = load_image(TINYNET / "images" / f"{image_id}.png")
        images[image_id] = raster
        x = preprocess(raster, model.preprocess)
        _, probs = model.predict(x)
        hits += model.label_of(int(np.argmax(probs))) == label
        maps[image_id] = smoothgrad_gbp(
            model, x, cfg=SmoothGradConfig(rng_seed=i), image_id=image_id
        )
    accuracy = hits / len(labels)

    out = run_masking_experiment(model, images, maps)
    elapsed = time.monotonic() - start
    ok = (
        len(images) >= 20
        and accuracy >= 0.9
        and out.mean_correct > out.mean_incorrect
        and out.p_bootstrap < 0.05
        and elapsed < 600.0
    )
    _report(
        "masking-replication", ok,
        f"{len(images)} images all-vs-all, net accuracy {accuracy:.2f} (>= 0.9), "
        f"inverse-rank correct {out.mean_correct:.3f} > incorrect {out.mean_incorrect:.3f}, "
        f"bootstrap p {out.p_bootstrap:.4f} (< 0.05), {elapsed:.1f}s (budget 600s)",
    )


# ---------------------------------------------------------------------------
# job count never changes bytes
# ---------------------------------------------------------------------------

def _digests(*paths: Path) -> list[str]:
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_correlate_and_evaluate_independent_of_job_count(tmp_path):
    rng = np.random.default_rng(4)
    ann = tmp_path / "ann"
    ids = sorted(json.loads((TINYNET / "labels.json").read_text()))
    code = main([
        "attribute", "--model", str(TINYNET / "model.json"),
        "--weights", str(TINYNET / "model.selw"),
        "--images", str(TINYNET / "images"), "--out", str(ann), "--methods", "gbp",
    ])
    assert code == 0

    human = tmp_path / "human"
    human.mkdir()
    for image_id in ids:
        smap = SelectivityMap(image_id, MapKind.FREE_FIX, rng.uniform(0, 1, (50, 50)))
        write_selm(smap, human / f"{image_id}.free.selm")
    fix = tmp_path / "fixations.csv"
    rows = ["image_id,task,x,y"]
    for image_id in ids:
        for _ in range(6):
            rows.append(f"{image_id},free,{rng.uniform(2, 48):.3f},{rng.uniform(2, 48):.3f}")
    fix.write_text("\n".join(rows) + "\n")

    corr = {}
    for jobs in ("1", "8"):
        out = tmp_path / f"corr{jobs}"
        code = main([
            "correlate", "--ann", str(ann), "--human", str(human), "--out", str(out),
            "--methods", "gbp", "--kinds", "free", "--sigma-max", "4",
            "--sigma-step", "1", "--fixations", str(fix), "--bootstrap", "6",
            "--jobs", jobs,
        ])
        assert code == 0
        corr[jobs] = _digests(out / "results.csv", out / "sweeps.json")

    ev = {}
    for jobs in ("1", "8"):
        out = tmp_path / f"ev{jobs}"
        code = main([
            "evaluate", "--model", str(TINYNET / "model.json"),
            "--weights", str(TINYNET / "model.selw"),
            "--images", str(TINYNET / "images"), "--maps", str(ann),
            "--out", str(out), "--method", "gbp", "--jobs", jobs,
        ])
        assert code == 0
        ev[jobs] = _digests(out / "inverse_rank.csv", out / "evaluate_summary.json")

    ok = corr["1"] == corr["8"] and ev["1"] == ev["8"]
    _report(
        "jobs-determinism", ok,
        f"correlate byte-identical at 1 vs 8 jobs: {corr['1'] == corr['8']}; "
        f"evaluate: {ev['1'] == ev['8']}",
    )
