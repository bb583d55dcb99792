"""Command-line front end.

Subcommands chain the pipeline stages together: ``attribute`` (model maps),
``maps``/``pc`` (human maps + shared component), ``correlate`` (smoothing-
optimized comparison), ``mask``/``evaluate``/``export-stimuli`` (masking
experiments), and ``export-fixture`` (forward-pass parity fixtures).

Every command is deterministic given its config and seeds: reruns produce
byte-identical artifacts, independent of ``--jobs``. Exit codes: 0 success,
1 partial per-item failure, 2 config/usage/IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image

from . import attribution
from .behavioral import estimators
from .behavioral.human_pc import DEFAULT_PC_SIZE, HumanPCModel, fit_human_pc, project_human_pc
from .behavioral.records import (
    by_image,
    load_chains,
    load_discrimination,
    load_fixations,
    load_patch_ratings,
    unit_groups,
)
from .compare import SmoothingSearchConfig, bootstrap_human, optimal_smoothing, pearson
from .errors import SelectivityError
from .grids import bilinear_resize, gaussian_blur
from .maps import (
    ATTRIBUTION_KINDS,
    HUMAN_KINDS,
    MapKind,
    SelectivityMap,
    read_selm,
    write_selm,
)
from .masking import (
    apply_mask,
    build_stimulus_sets,
    run_masking_experiment,
    threshold_mask,
    write_inverse_rank_csv,
)
from .model.graph import ModelGraph, load_model
from .model.preprocess import load_image, preprocess
from .model.selw import write_selw

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")

METHOD_FNS: Mapping[MapKind, Callable] = {
    MapKind.VANILLA_GRAD: attribution.vanilla_gradient,
    MapKind.GBP: attribution.guided_backprop,
    MapKind.GBP_X_IMAGE: attribution.gbp_x_image,
    MapKind.SGBP: attribution.smoothgrad_gbp,
    MapKind.GRAD_CAM: attribution.grad_cam,
    MapKind.SCORE_CAM: attribution.score_cam,
}


# -- config plumbing -----------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise SelectivityError(f"config file {p} does not exist")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SelectivityError(f"{p}: config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SelectivityError(f"{p}: config root must be an object")
    return doc


def _opt(args: argparse.Namespace, cfg: dict, name: str, default=None, required: bool = False):
    """Flag value, else config value, else default; names use underscores."""
    value = getattr(args, name, None)
    if value is None:
        value = cfg.get(name, default)
    if value is None and required:
        raise SelectivityError(f"missing required option --{name.replace('_', '-')}")
    return value


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise SelectivityError(f"{what} {p} does not exist")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _discover_images(images_dir: Path) -> list[tuple[str, Path]]:
    found = [
        p for p in sorted(images_dir.iterdir())
        if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file()
    ]
    return [(p.stem, p) for p in found]


def _parse_kinds(spec: str | Sequence[str] | None, allowed: Sequence[MapKind]) -> list[MapKind]:
    if spec is None:
        return list(allowed)
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    kinds = []
    for name in names:
        name = name.strip()
        try:
            kind = MapKind(name)
        except ValueError:
            raise SelectivityError(
                f"unknown map kind {name!r}; choose from "
                f"{', '.join(k.value for k in allowed)}"
            ) from None
        if kind not in allowed:
            raise SelectivityError(f"map kind {name!r} not valid for this command")
        kinds.append(kind)
    return kinds


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, name: str, doc: dict) -> None:
    doc = dict(doc)
    (out / name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


def _save_png(image: np.ndarray, path: Path) -> None:
    data = np.round(np.clip(image, 0.0, 255.0)).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path)


def _map_paths(directory: Path) -> dict[tuple[str, MapKind], Path]:
    """Index <image_id>.<kind>.selm files under a directory."""
    out: dict[tuple[str, MapKind], Path] = {}
    for p in sorted(directory.glob("*.selm")):
        parts = p.name.rsplit(".", 2)
        if len(parts) != 3:
            continue
        image_id, kind_name, _ = parts
        try:
            kind = MapKind(kind_name)
        except ValueError:
            continue
        out[(image_id, kind)] = p
    return out


# -- attribute -----------------------------------------------------------


def cmd_attribute(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    model = load_model(
        _existing(_opt(args, cfg, "model", required=True), "model manifest"),
        _existing(_opt(args, cfg, "weights", required=True), "weight file"),
    )
    images_dir = _existing(_opt(args, cfg, "images", required=True), "image directory")
    out = _out_dir(_opt(args, cfg, "out", required=True))
    methods = _parse_kinds(_opt(args, cfg, "methods"), ATTRIBUTION_KINDS)
    seed = int(_opt(args, cfg, "seed", 0))
    jobs = max(1, int(_opt(args, cfg, "jobs", 1)))

    images = _discover_images(images_dir)
    if not images:
        print(f"0 images found in {images_dir}; nothing to do")
        _write_manifest(out, "attribute_manifest.json", {"images": 0, "outputs": {}})
        return 0

    def work(task: tuple[int, str, Path]) -> tuple[str, dict[str, str], list[str]]:
        index, image_id, path = task
        outputs: dict[str, str] = {}
        failures: list[str] = []
        try:
            x = preprocess(load_image(path), model.preprocess)
        except SelectivityError as exc:
            return image_id, outputs, [f"{image_id}: {exc}"]
        for method in methods:
            try:
                if method is MapKind.SGBP:
                    smap = attribution.smoothgrad_gbp(
                        model, x,
                        cfg=attribution.SmoothGradConfig(rng_seed=_derived_seed(seed, index)),
                        image_id=image_id,
                    )
                else:
                    smap = METHOD_FNS[method](model, x, image_id=image_id)
                name = f"{image_id}.{method.value}.selm"
                write_selm(smap, out / name)
                outputs[name] = _sha256(out / name)
            except SelectivityError as exc:
                failures.append(f"{image_id}/{method.value}: {exc}")
        return image_id, outputs, failures

    tasks = [(i, image_id, path) for i, (image_id, path) in enumerate(images)]
    if jobs == 1:
        done = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(work, tasks))

    outputs: dict[str, str] = {}
    failures: list[str] = []
    for _, outs, fails in sorted(done, key=lambda d: d[0]):
        outputs.update(outs)
        failures.extend(fails)
    _write_manifest(
        out, "attribute_manifest.json", {"images": len(images), "outputs": outputs}
    )
    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    print(f"wrote {len(outputs)} maps for {len(images)} images to {out}")
    return 1 if failures else 0


# -- maps / pc -----------------------------------------------------------


def _load_behavioral(args, cfg) -> dict[str, dict]:
    """Load whichever CSVs are configured, grouped by image id."""
    sources: dict[str, dict] = {}
    loaders = {
        "ratings": load_patch_ratings,
        "discrimination": load_discrimination,
        "chains": load_chains,
        "fixations": load_fixations,
    }
    for key, loader in loaders.items():
        path = _opt(args, cfg, key)
        if path is not None:
            sources[key] = by_image(loader(_existing(path, f"{key} CSV")))
    return sources


_KIND_SOURCE = {
    MapKind.PATCH: "ratings",
    MapKind.DPRIME: "discrimination",
    MapKind.SPATIAL_KDE: "chains",
    MapKind.FREE_FIX: "fixations",
    MapKind.SALIENCY_FIX: "fixations",
    MapKind.OBJECT_FIX: "fixations",
}


def _estimate_human_map(
    kind: MapKind,
    records: list,
    size: tuple[int, int],
    image_id: str,
    dprime_sigma: float,
) -> SelectivityMap:
    if kind is MapKind.PATCH:
        return estimators.patch_map(records, size, image_id=image_id)
    if kind is MapKind.DPRIME:
        grid = estimators.dprime_grid(records)
        return estimators.dprime_map(grid, dprime_sigma, size, image_id=image_id)
    if kind is MapKind.SPATIAL_KDE:
        return estimators.spatial_kde_map(records, size, image_id=image_id)
    task = {MapKind.FREE_FIX: "free", MapKind.SALIENCY_FIX: "saliency", MapKind.OBJECT_FIX: "object"}[kind]
    return estimators.fixation_map(records, task, size, image_id=image_id)


def _human_maps_from_sources(
    sources: dict[str, dict],
    kinds: Sequence[MapKind],
    size: tuple[int, int],
    dprime_sigma: float,
) -> tuple[dict[MapKind, dict[str, SelectivityMap]], list[str]]:
    needed = {k: _KIND_SOURCE[k] for k in kinds}
    for kind, source in needed.items():
        if source not in sources:
            raise SelectivityError(
                f"kind {kind.value!r} requires the {source} CSV, which was not given"
            )
    ids = sorted({i for source in needed.values() for i in sources[source]})
    maps: dict[MapKind, dict[str, SelectivityMap]] = {k: {} for k in kinds}
    failures: list[str] = []
    for image_id in ids:
        for kind in kinds:
            records = sources[needed[kind]].get(image_id, [])
            try:
                maps[kind][image_id] = _estimate_human_map(
                    kind, records, size, image_id, dprime_sigma
                )
            except SelectivityError as exc:
                failures.append(f"{image_id}/{kind.value}: {exc}")
    return maps, failures


def _run_maps(args: argparse.Namespace, pc_only: bool) -> int:
    cfg = _load_config(args.config)
    out = _out_dir(_opt(args, cfg, "out", required=True))
    size_opt = _opt(args, cfg, "map_size", list(DEFAULT_PC_SIZE))
    size = (int(size_opt[0]), int(size_opt[1]))
    dprime_sigma = float(_opt(args, cfg, "dprime_sigma", 1.0))
    kinds = _parse_kinds(_opt(args, cfg, "kinds"), HUMAN_KINDS)
    if pc_only:
        kinds = list(HUMAN_KINDS)

    sources = _load_behavioral(args, cfg)
    maps, failures = _human_maps_from_sources(sources, kinds, size, dprime_sigma)

    outputs: dict[str, str] = {}
    if not pc_only:
        for kind in kinds:
            for image_id, smap in sorted(maps[kind].items()):
                name = f"{image_id}.{kind.value}.selm"
                write_selm(smap, out / name)
                outputs[name] = _sha256(out / name)

    wants_pc = set(kinds) == set(HUMAN_KINDS) and not failures
    if pc_only and not wants_pc:
        for message in failures:
            print(f"error: {message}", file=sys.stderr)
        raise SelectivityError("shared component needs all six kinds estimated cleanly")
    if wants_pc:
        model = fit_human_pc({k: list(maps[k].values()) for k in HUMAN_KINDS}, map_size=size)
        model.save(out / "humanpc.json")
        outputs["humanpc.json"] = _sha256(out / "humanpc.json")
        for image_id in sorted(maps[HUMAN_KINDS[0]]):
            per_image = {k: maps[k][image_id] for k in HUMAN_KINDS}
            smap = project_human_pc(model, per_image)
            name = f"{image_id}.{MapKind.HUMAN_PC.value}.selm"
            write_selm(smap, out / name)
            outputs[name] = _sha256(out / name)
    elif not pc_only:
        print("skipping shared component (needs all six kinds, cleanly estimated)")

    _write_manifest(out, "maps_manifest.json", {"outputs": outputs})
    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    print(f"wrote {len(outputs)} artifacts to {out}")
    return 1 if failures else 0


def cmd_maps(args: argparse.Namespace) -> int:
    return _run_maps(args, pc_only=False)


def cmd_pc(args: argparse.Namespace) -> int:
    return _run_maps(args, pc_only=True)


# -- correlate -----------------------------------------------------------


def _read_map_set(directory: Path, kinds: Sequence[MapKind]) -> dict[MapKind, dict[str, SelectivityMap]]:
    paths = _map_paths(directory)
    out: dict[MapKind, dict[str, SelectivityMap]] = {}
    for (image_id, kind), path in paths.items():
        if kind in kinds:
            out.setdefault(kind, {})[image_id] = read_selm(path, image_id=image_id, kind=kind)
    return out


def _bootstrap_records(kind: MapKind, sources: dict[str, dict]) -> list | None:
    source = _KIND_SOURCE.get(kind)
    if source is None or source not in sources:
        return None
    records = [r for rows in sources[source].values() for r in rows]
    if kind in (MapKind.FREE_FIX, MapKind.SALIENCY_FIX, MapKind.OBJECT_FIX):
        task = {MapKind.FREE_FIX: "free", MapKind.SALIENCY_FIX: "saliency", MapKind.OBJECT_FIX: "object"}[kind]
        records = [r for r in records if r.task == task]
    return records or None


def cmd_correlate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    ann_dir = _existing(_opt(args, cfg, "ann", required=True), "model-map directory")
    human_dir = _existing(_opt(args, cfg, "human", required=True), "human-map directory")
    out = _out_dir(_opt(args, cfg, "out", required=True))
    seed = int(_opt(args, cfg, "seed", 0))
    bootstrap_b = int(_opt(args, cfg, "bootstrap", 100))
    search = SmoothingSearchConfig(
        sigma_max=float(_opt(args, cfg, "sigma_max", 30.0)),
        sigma_step=float(_opt(args, cfg, "sigma_step", 0.5)),
    )
    methods = _parse_kinds(_opt(args, cfg, "methods"), ATTRIBUTION_KINDS)
    human_kinds = _parse_kinds(_opt(args, cfg, "kinds"), tuple(HUMAN_KINDS) + (MapKind.HUMAN_PC,))
    dprime_sigma = float(_opt(args, cfg, "dprime_sigma", 1.0))
    jobs = max(1, int(_opt(args, cfg, "jobs", 1)))

    ann_sets = _read_map_set(ann_dir, methods)
    human_sets = _read_map_set(human_dir, human_kinds)
    sources = _load_behavioral(args, cfg)

    failures: list[str] = []
    cells: list[tuple[MapKind, MapKind]] = []
    for method in methods:
        if method not in ann_sets:
            failures.append(f"no {method.value} maps under {ann_dir}")
            continue
        for kind in human_kinds:
            if kind not in human_sets:
                failures.append(f"no {kind.value} maps under {human_dir}")
                continue
            cells.append((method, kind))

    def work(cell: tuple[MapKind, MapKind]):
        method, kind = cell
        try:
            result = optimal_smoothing(
                ann_sets[method], human_sets[kind], search,
                method_id=method.value, human_kind=kind.value,
            )
        except SelectivityError as exc:
            return None, f"{method.value}/{kind.value}: {exc}"
        records = _bootstrap_records(kind, sources)
        if records is not None:
            blurred = {
                i: gaussian_blur(
                    m.grid if m.shape == search.resample_size
                    else _resampled_grid(m, search.resample_size),
                    result.sigma_star,
                )
                for i, m in ann_sets[method].items()
            }
            size = human_sets[kind][next(iter(human_sets[kind]))].shape

            def mean_r(resampled: list) -> float:
                grouped = by_image(resampled)
                rs = []
                for image_id, ann_grid in sorted(blurred.items()):
                    smap = _estimate_human_map(
                        kind, grouped.get(image_id, []), size, image_id, dprime_sigma
                    )
                    rs.append(pearson(ann_grid, _resampled_grid(smap, search.resample_size)))
                return float(np.mean(rs))

            summary = bootstrap_human(mean_r, unit_groups(records), b=bootstrap_b, seed=seed)
            result = result.with_bootstrap(summary.sd, summary.ci_lo, summary.ci_hi)
        return result, None

    if jobs == 1:
        done = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(work, cells))

    rows = []
    sweeps: dict[str, list] = {}
    for result, failure in done:
        if failure is not None:
            failures.append(failure)
            continue
        rows.append(result)
        sweeps[f"{result.method_id}/{result.human_kind}"] = [list(p) for p in result.sweep]

    rows.sort(key=lambda r: (r.method_id, r.human_kind))
    with open(out / "results.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("method,human_kind,sigma_star,mean_r,bootstrap_sd,ci_lo,ci_hi\n")
        for r in rows:
            sd = "" if r.bootstrap_sd is None else f"{r.bootstrap_sd:.6f}"
            lo = "" if r.ci_lo is None else f"{r.ci_lo:.6f}"
            hi = "" if r.ci_hi is None else f"{r.ci_hi:.6f}"
            fh.write(
                f"{r.method_id},{r.human_kind},{r.sigma_star:g},{r.mean_r:.6f},{sd},{lo},{hi}\n"
            )
    (out / "sweeps.json").write_text(json.dumps(sweeps, indent=2, sort_keys=True) + "\n")

    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    print(f"wrote {len(rows)} comparisons to {out / 'results.csv'}")
    return 1 if failures else 0


def _resampled_grid(smap: SelectivityMap, size: tuple[int, int]) -> np.ndarray:
    if smap.shape == size:
        return smap.grid
    return bilinear_resize(smap.grid, size[0], size[1])


# -- mask / evaluate / export-stimuli ------------------------------------


def _select_maps(directory: Path, method: MapKind) -> dict[str, SelectivityMap]:
    paths = _map_paths(directory)
    out = {
        image_id: read_selm(path, image_id=image_id, kind=kind)
        for (image_id, kind), path in paths.items()
        if kind is method
    }
    if not out:
        raise SelectivityError(f"no {method.value} maps under {directory}")
    return out


def cmd_mask(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    images_dir = _existing(_opt(args, cfg, "images", required=True), "image directory")
    maps_dir = _existing(_opt(args, cfg, "maps", required=True), "map directory")
    out = _out_dir(_opt(args, cfg, "out", required=True))
    method = _parse_kinds(_opt(args, cfg, "method", MapKind.SGBP.value), list(MapKind))[0]
    reveal = float(_opt(args, cfg, "reveal", 0.5))
    grayscale = bool(_opt(args, cfg, "grayscale", False))

    maps = _select_maps(maps_dir, method)
    images = dict(_discover_images(images_dir))
    failures = []
    outputs: dict[str, str] = {}
    for image_id in sorted(maps):
        if image_id not in images:
            failures.append(f"{image_id}: map has no matching image")
            continue
        try:
            mask = threshold_mask(maps[image_id], reveal)
            masked = apply_mask(load_image(images[image_id]), mask, grayscale=grayscale)
            name = f"{image_id}.masked.png"
            _save_png(masked, out / name)
            outputs[name] = _sha256(out / name)
            mask_name = f"{image_id}.mask.selm"
            write_selm(mask, out / mask_name)
            outputs[mask_name] = _sha256(out / mask_name)
        except SelectivityError as exc:
            failures.append(f"{image_id}: {exc}")
    _write_manifest(out, "mask_manifest.json", {"outputs": outputs})
    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    print(f"wrote {len(outputs)} artifacts to {out}")
    return 1 if failures else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    model = load_model(
        _existing(_opt(args, cfg, "model", required=True), "model manifest"),
        _existing(_opt(args, cfg, "weights", required=True), "weight file"),
    )
    images_dir = _existing(_opt(args, cfg, "images", required=True), "image directory")
    maps_dir = _existing(_opt(args, cfg, "maps", required=True), "map directory")
    out = _out_dir(_opt(args, cfg, "out", required=True))
    method = _parse_kinds(_opt(args, cfg, "method", MapKind.SGBP.value), list(MapKind))[0]
    seed = int(_opt(args, cfg, "seed", 0))
    pairing = str(_opt(args, cfg, "pairing", "all-vs-all"))
    convention = str(_opt(args, cfg, "rank_convention", "distance"))
    jobs = max(1, int(_opt(args, cfg, "jobs", 1)))

    maps = _select_maps(maps_dir, method)
    images = {}
    for image_id, path in _discover_images(images_dir):
        if image_id in maps:
            images[image_id] = load_image(path)
    missing = sorted(set(maps) - set(images))
    if missing:
        raise SelectivityError(f"maps without matching images: {missing}")

    outcome = run_masking_experiment(
        model, images, maps, pairing=pairing, seed=seed,
        rank_convention=convention, jobs=jobs,
    )
    write_inverse_rank_csv(outcome.results, out / "inverse_rank.csv")
    summary = {
        "method": method.value,
        "rank_convention": convention,
        "images": len(images),
        "mean_correct": outcome.mean_correct,
        "mean_incorrect": outcome.mean_incorrect,
        "t": outcome.t,
        "p_raw": outcome.p_raw,
        "p_bonferroni": outcome.p_bonferroni,
        "p_bootstrap": outcome.p_bootstrap,
    }
    _write_manifest(out, "evaluate_summary.json", summary)
    print(
        f"mean inverse-rank: correct {outcome.mean_correct:.4f}, "
        f"incorrect {outcome.mean_incorrect:.4f} (bootstrap p = {outcome.p_bootstrap:.4f})"
    )
    return 0


def cmd_export_stimuli(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    images_dir = _existing(_opt(args, cfg, "images", required=True), "image directory")
    maps_dir = _existing(_opt(args, cfg, "maps", required=True), "map directory")
    out = _out_dir(_opt(args, cfg, "out", required=True))
    method = _parse_kinds(_opt(args, cfg, "method", MapKind.SGBP.value), list(MapKind))[0]
    n_sets = int(_opt(args, cfg, "sets", 10))
    seed = int(_opt(args, cfg, "seed", 0))
    rgb = bool(_opt(args, cfg, "rgb", False))

    maps = _select_maps(maps_dir, method)
    images = {i: p for i, p in _discover_images(images_dir) if i in maps}
    missing = sorted(set(maps) - set(images))
    if missing:
        raise SelectivityError(f"maps without matching images: {missing}")

    masks = {i: threshold_mask(maps[i]) for i in sorted(maps)}
    trials = build_stimulus_sets(sorted(masks), masks, n_sets, seed=seed)

    outputs: dict[str, str] = {}
    listing = []
    for t in trials:
        mask = masks[t.mask_source_id]
        if t.rotation_deg:
            mask = mask.with_grid(np.ascontiguousarray(np.rot90(mask.grid, k=t.rotation_deg // 90)))
        masked = apply_mask(load_image(images[t.image_id]), mask, grayscale=not rgb)
        name = f"set{t.set_index:03d}_{t.condition}_{t.image_id}.png"
        _save_png(masked, out / name)
        outputs[name] = _sha256(out / name)
        listing.append(
            {
                "set": t.set_index,
                "image_id": t.image_id,
                "condition": t.condition,
                "mask_source": t.mask_source_id,
                "rotation_deg": t.rotation_deg,
                "file": name,
            }
        )
    _write_manifest(
        out, "stimuli_manifest.json", {"trials": listing, "outputs": outputs}
    )
    print(f"wrote {len(trials)} stimuli across {n_sets} sets to {out}")
    return 0


# -- export-fixture ------------------------------------------------------


def cmd_export_fixture(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    model = load_model(
        _existing(_opt(args, cfg, "model", required=True), "model manifest"),
        _existing(_opt(args, cfg, "weights", required=True), "weight file"),
    )
    out_path = Path(_opt(args, cfg, "out", required=True))
    count = int(_opt(args, cfg, "count", 4))
    seed = int(_opt(args, cfg, "seed", 0))

    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        # quantize the input to f32 first: that is what the file stores, so
        # logits must correspond to the stored values exactly
        x = rng.standard_normal(model.input_shape).astype(np.float32)
        logits, _ = model.predict(x.astype(np.float64))
        tensors[f"input_{i:03d}"] = x
        tensors[f"logits_{i:03d}"] = logits.astype(np.float32)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_selw(out_path, tensors)
    print(f"wrote fixture with {count} input/logit pairs to {out_path}")
    return 0


# -- parser --------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selectivity",
        description="Attention-map comparison toolkit: model attribution maps, "
        "human behavioral maps, correlation, and masking experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attribute", help="compute model attribution maps")
    _add_common(p)
    p.add_argument("--model", help="model manifest JSON")
    p.add_argument("--weights", help="SELW weight file")
    p.add_argument("--images", help="directory of PNG/PGM/PPM images")
    p.add_argument("--methods", help="comma list of methods (default all six)")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.set_defaults(fn=cmd_attribute)

    for name, fn, help_text in (
        ("maps", cmd_maps, "estimate human maps from behavioral CSVs"),
        ("pc", cmd_pc, "fit and project only the shared component"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.add_argument("--ratings", help="patch_ratings.csv")
        p.add_argument("--discrimination", help="discrimination.csv")
        p.add_argument("--chains", help="chains.csv")
        p.add_argument("--fixations", help="fixations.csv")
        p.add_argument("--kinds", help="comma list of kinds (default all six)")
        p.add_argument("--map-size", dest="map_size", nargs=2, type=int, metavar=("H", "W"))
        p.add_argument("--dprime-sigma", dest="dprime_sigma", type=float)
        p.set_defaults(fn=fn)

    p = sub.add_parser("correlate", help="smoothing-optimized map correlation")
    _add_common(p)
    p.add_argument("--ann", help="directory of model maps (SELM)")
    p.add_argument("--human", help="directory of human maps (SELM)")
    p.add_argument("--methods", help="comma list of model methods")
    p.add_argument("--kinds", help="comma list of human kinds")
    p.add_argument("--sigma-max", dest="sigma_max", type=float)
    p.add_argument("--sigma-step", dest="sigma_step", type=float)
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates (default 100)")
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument("--ratings", help="patch_ratings.csv for bootstrap")
    p.add_argument("--discrimination", help="discrimination.csv for bootstrap")
    p.add_argument("--chains", help="chains.csv for bootstrap")
    p.add_argument("--fixations", help="fixations.csv for bootstrap")
    p.add_argument("--dprime-sigma", dest="dprime_sigma", type=float)
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("mask", help="threshold maps and write masked images")
    _add_common(p)
    p.add_argument("--images", help="directory of images")
    p.add_argument("--maps", help="directory of maps (SELM)")
    p.add_argument("--method", help="map kind to use (default sgbp)")
    p.add_argument("--reveal", type=float, help="revealed fraction (default 0.5)")
    p.add_argument("--grayscale", action="store_const", const=True)
    p.set_defaults(fn=cmd_mask)

    p = sub.add_parser("evaluate", help="inverse-rank masking experiment")
    _add_common(p)
    p.add_argument("--model", help="model manifest JSON")
    p.add_argument("--weights", help="SELW weight file")
    p.add_argument("--images", help="directory of images")
    p.add_argument("--maps", help="directory of maps (SELM)")
    p.add_argument("--method", help="map kind to use (default sgbp)")
    p.add_argument("--pairing", choices=("all-vs-all", "sampled"))
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument(
        "--rank-convention",
        dest="rank_convention",
        choices=("distance", "position"),
        help="r = rank-1 (distance, default) or 1-based rank (position)",
    )
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("export-stimuli", help="balanced masked stimulus sets")
    _add_common(p)
    p.add_argument("--images", help="directory of images")
    p.add_argument("--maps", help="directory of maps (SELM)")
    p.add_argument("--method", help="map kind to use (default sgbp)")
    p.add_argument("--sets", type=int, help="number of 10-trial sets (default 10)")
    p.add_argument("--rgb", action="store_const", const=True, help="keep RGB (default grayscale)")
    p.set_defaults(fn=cmd_export_stimuli)

    p = sub.add_parser("export-fixture", help="write input/logit parity fixtures")
    _add_common(p)
    p.add_argument("--model", help="model manifest JSON")
    p.add_argument("--weights", help="SELW weight file")
    p.add_argument("--count", type=int, help="number of inputs (default 4)")
    p.set_defaults(fn=cmd_export_fixture)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SelectivityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
