"""Masked-recognition experiments: thresholded map masks, inverse-rank
scoring of a model on masked images, recognition d' from human trials, and
balanced stimulus-set construction.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .compare import paired_t_test, pearson
from .errors import EstimatorError, SchemaError, SelectivityError, ZeroVarianceError
from .grids import bilinear_resize
from .maps import SelectivityMap
from .model.graph import ModelGraph, rank_of_class
from .model.preprocess import LUMA_WEIGHTS, preprocess
from .sdt import corrected_rate, dprime_from_rates

REVEAL_FRACTION = 0.5
MAX_DONOR_CORRELATION = 0.4
RANK_CONVENTIONS = ("distance", "position")
RECOGNITION_CONDITIONS = ("correct", "incorrect")


def threshold_mask(smap: SelectivityMap, reveal_fraction: float = REVEAL_FRACTION) -> SelectivityMap:
    """Zero everything but the top ``reveal_fraction`` of pixels.

    Keeps exactly ceil(fraction * H * W) pixels — ties resolved in row-major
    scan order — and rescales survivors so the mask spans [0, 1].
    """
    if not 0.0 < reveal_fraction < 1.0:
        raise ValueError(f"reveal_fraction must be in (0, 1), got {reveal_fraction}")
    grid = smap.grid
    if grid.max() == grid.min():
        raise ZeroVarianceError(f"map {smap.image_id!r} is constant; cannot threshold")
    h, w = grid.shape
    keep = int(np.ceil(reveal_fraction * h * w))
    flat = grid.ravel()
    order = np.argsort(-flat, kind="stable")   # stable: ties keep scan order
    out = np.zeros_like(flat)
    chosen = order[:keep]
    out[chosen] = flat[chosen]
    out /= out.max()
    return smap.with_grid(out.reshape(h, w))


def apply_mask(image: np.ndarray, mask: SelectivityMap, grayscale: bool = False) -> np.ndarray:
    """Pixelwise product of an image with a mask.

    The mask is bilinearly resampled to the image size. With ``grayscale`` an
    RGB image collapses to luma before masking (single-channel output).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3 and grayscale:
        image = image @ LUMA_WEIGHTS
    h, w = image.shape[:2]
    grid = mask.grid if mask.shape == (h, w) else bilinear_resize(mask.grid, h, w)
    if image.ndim == 3:
        return image * grid[:, :, None]
    return image * grid


@dataclass(frozen=True)
class RotatedMask:
    mask: SelectivityMap
    source_id: str
    rotation_deg: int


def make_incorrect_mask(
    correct: SelectivityMap,
    donor_pool: Sequence[SelectivityMap],
    rng_seed: int,
    max_corr: float = MAX_DONOR_CORRELATION,
) -> RotatedMask:
    """Pick another image's mask, randomly rotated, dissimilar to the correct
    one.

    Draws (donor, rotation by a multiple of 90 degrees) uniformly until the
    rotated mask correlates below ``max_corr`` with the correct mask.
    Non-square masks only rotate by 0/180. Deterministic per seed.
    """
    pool = [m for m in donor_pool if m.image_id != correct.image_id]
    if not pool:
        raise EstimatorError(f"no donor masks other than {correct.image_id!r} in pool")
    h, w = correct.shape
    rotations = (0, 90, 180, 270) if h == w else (0, 180)
    rng = np.random.default_rng(rng_seed)
    attempts = max(10 * len(pool), 100)
    best = np.inf
    for _ in range(attempts):
        donor = pool[int(rng.integers(0, len(pool)))]
        deg = int(rotations[int(rng.integers(0, len(rotations)))])
        rotated = np.rot90(donor.grid, k=deg // 90) if deg else donor.grid
        if rotated.shape != correct.shape:
            continue
        r = pearson(rotated, correct.grid)
        best = min(best, r)
        if r < max_corr:
            return RotatedMask(
                mask=donor.with_grid(np.ascontiguousarray(rotated)),
                source_id=donor.image_id,
                rotation_deg=deg,
            )
    raise EstimatorError(
        f"no donor mask under r < {max_corr} for {correct.image_id!r} after "
        f"{attempts} draws (best r = {best:.3f})"
    )


@dataclass(frozen=True)
class InverseRankResult:
    image_id: str
    mask_source_id: str
    condition: str            # "correct", "incorrect", or "none"
    rank_distance: int
    n_classes: int
    inverse_rank: float


def inverse_rank(
    model: ModelGraph,
    image: np.ndarray,
    mask: SelectivityMap | None,
    image_id: str = "",
    mask_source_id: str = "",
    condition: str = "none",
    rank_convention: str = "distance",
) -> InverseRankResult:
    """Score how well masking preserves the model's unmasked top-1 class.

    Ground truth is the top-1 class on the unmasked image; r is how far that
    class falls in the masked image's prediction ordering; the score is
    N/(r+N), which is 1 exactly when the top-1 is unchanged. The "position"
    convention instead uses the 1-based rank (identity masking then scores
    N/(1+N), not 1).
    """
    if rank_convention not in RANK_CONVENTIONS:
        raise ValueError(f"rank_convention must be one of {RANK_CONVENTIONS}")
    _, clean_probs = model.predict(preprocess(image, model.preprocess))
    truth = int(np.argmax(clean_probs))
    masked = image if mask is None else apply_mask(image, mask)
    _, masked_probs = model.predict(preprocess(masked, model.preprocess))
    position = rank_of_class(masked_probs, truth)
    r = position - 1 if rank_convention == "distance" else position
    n = model.class_count
    return InverseRankResult(
        image_id=image_id,
        mask_source_id=mask_source_id,
        condition=condition,
        rank_distance=r,
        n_classes=n,
        inverse_rank=n / (r + n),
    )


@dataclass(frozen=True)
class MaskingOutcome:
    results: tuple[InverseRankResult, ...]
    mean_correct: float
    mean_incorrect: float
    t: float
    p_raw: float
    p_bonferroni: float
    p_bootstrap: float


def bootstrap_paired_p(diffs: Sequence[float], b: int = 2000, seed: int = 0) -> float:
    """One-sided bootstrap p for mean(diffs) > 0: resample the paired
    differences and count resampled means <= 0 (add-one corrected)."""
    d = np.asarray(diffs, dtype=np.float64)
    if d.size < 2:
        raise ValueError(f"need at least 2 paired differences, got {d.size}")
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(b):
        draw = d[rng.integers(0, d.size, size=d.size)]
        if draw.mean() <= 0:
            hits += 1
    return (hits + 1) / (b + 1)


def run_masking_experiment(
    model: ModelGraph,
    images: Mapping[str, np.ndarray],
    maps: Mapping[str, SelectivityMap],
    pairing: str = "all-vs-all",
    seed: int = 0,
    reveal_fraction: float = REVEAL_FRACTION,
    rank_convention: str = "distance",
    sample_size: int = 5,
    comparisons: int = 1,
    jobs: int = 1,
) -> MaskingOutcome:
    """Mask every image with its own map and with other images' maps, and
    compare inverse-rank between the two conditions.

    "all-vs-all" pairs each image with every other image's mask (unrotated);
    "sampled" draws ``sample_size`` donors per image from a seeded stream.
    Paired statistics treat each image's correct score against the mean of
    its incorrect scores. ``jobs`` > 1 scores (image, mask) pairs in a thread
    pool; the schedule is fixed up front, so results are identical at any
    job count.
    """
    ids = sorted(images)
    if sorted(maps) != ids:
        raise EstimatorError(
            f"images {ids} and maps {sorted(maps)} cover different id sets"
        )
    if len(ids) < 2:
        raise EstimatorError("masking experiment needs at least 2 images")
    if pairing not in ("all-vs-all", "sampled"):
        raise ValueError(f"pairing must be all-vs-all or sampled, got {pairing!r}")

    masks = {i: threshold_mask(maps[i], reveal_fraction) for i in ids}
    tasks: list[tuple[str, str, str]] = []
    for idx, image_id in enumerate(ids):
        tasks.append((image_id, image_id, "correct"))
        donors = [d for d in ids if d != image_id]
        if pairing == "sampled":
            rng = np.random.default_rng((seed, idx))
            pick = rng.choice(len(donors), size=min(sample_size, len(donors)), replace=False)
            donors = [donors[int(k)] for k in sorted(pick)]
        tasks.extend((image_id, donor, "incorrect") for donor in donors)

    def score(task: tuple[str, str, str]) -> InverseRankResult:
        image_id, source, condition = task
        return inverse_rank(
            model, images[image_id], masks[source],
            image_id=image_id, mask_source_id=source,
            condition=condition, rank_convention=rank_convention,
        )

    if jobs <= 1:
        results = [score(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(score, tasks))

    incorrect_by_id: dict[str, list[float]] = {i: [] for i in ids}
    correct_by_id: dict[str, float] = {}
    for res in results:
        if res.condition == "correct":
            correct_by_id[res.image_id] = res.inverse_rank
        else:
            incorrect_by_id[res.image_id].append(res.inverse_rank)
    correct_scores = [correct_by_id[i] for i in ids]
    incorrect_means = [float(np.mean(incorrect_by_id[i])) for i in ids]

    diffs = [c - i for c, i in zip(correct_scores, incorrect_means)]
    try:
        t, p_raw, p_bonf = paired_t_test(correct_scores, incorrect_means, comparisons)
    except ZeroVarianceError:
        # identical maps across images: conditions indistinguishable
        t, p_raw, p_bonf = 0.0, 1.0, 1.0
    try:
        p_boot = bootstrap_paired_p(diffs, seed=seed)
    except ValueError:
        p_boot = 1.0
    if all(d == 0 for d in diffs):
        p_boot = 1.0
    return MaskingOutcome(
        results=tuple(results),
        mean_correct=float(np.mean(correct_scores)),
        mean_incorrect=float(np.mean(incorrect_means)),
        t=t,
        p_raw=p_raw,
        p_bonferroni=p_bonf,
        p_bootstrap=p_boot,
    )


def write_inverse_rank_csv(results: Sequence[InverseRankResult], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "mask_source", "condition", "rank_distance", "N", "inverse_rank"])
        for r in results:
            writer.writerow(
                [r.image_id, r.mask_source_id, r.condition, r.rank_distance,
                 r.n_classes, f"{r.inverse_rank:.6f}"]
            )


# -- human recognition records -------------------------------------------


@dataclass(frozen=True)
class RecognitionTrial:
    image_id: str
    condition: str             # "correct" or "incorrect" masking
    selected_label_set: str
    true_label_set: str
    participant_id: str


def load_recognition(path: str | Path) -> list[RecognitionTrial]:
    path = Path(path)
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = ("image_id", "condition", "selected_label_set", "true_label_set", "participant_id")
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: header missing column(s) {missing}")
        for row in reader:
            condition = row.get("condition", "")
            if condition not in RECOGNITION_CONDITIONS:
                raise SchemaError(
                    f"{path} row {reader.line_num}: condition {condition!r} "
                    f"not one of {list(RECOGNITION_CONDITIONS)}"
                )
            values = [row.get(c) or "" for c in needed]
            if any(v == "" for v in values):
                raise SchemaError(f"{path} row {reader.line_num}: missing value")
            out.append(RecognitionTrial(*values))
    return out


def recognition_dprime(trials: Sequence[RecognitionTrial], target_label_set: str) -> float:
    """d' for one label set: hits when it was true, false alarms when not.

    Same correction and clamping rules as the discrimination estimator.
    """
    signal = [t for t in trials if t.true_label_set == target_label_set]
    noise = [t for t in trials if t.true_label_set != target_label_set]
    if not signal or not noise:
        missing = "target" if not signal else "foil"
        raise EstimatorError(
            f"label set {target_label_set!r} never appears as {missing}"
        )
    hit = corrected_rate(
        sum(t.selected_label_set == target_label_set for t in signal), len(signal)
    )
    fa = corrected_rate(
        sum(t.selected_label_set == target_label_set for t in noise), len(noise)
    )
    return dprime_from_rates(hit, fa)


# -- stimulus-set construction -------------------------------------------


@dataclass(frozen=True)
class StimulusTrial:
    set_index: int
    image_id: str
    condition: str             # "correct" or "incorrect"
    mask_source_id: str
    rotation_deg: int


def build_stimulus_sets(
    image_ids: Sequence[str],
    masks: Mapping[str, SelectivityMap],
    n_sets: int,
    seed: int = 0,
    per_condition: int = 5,
    max_corr: float = MAX_DONOR_CORRELATION,
) -> list[StimulusTrial]:
    """Deal images into trial sets of ``2 * per_condition`` trials each,
    half correctly and half incorrectly masked.

    Every image appears equally often per condition across all sets whenever
    ``n_sets * per_condition`` is a multiple of the image count (ticket
    dealing over shuffled cyclic orders); within a set, images never repeat
    within a condition, and fully distinct sets are preferred when the pool
    allows it. Incorrect trials get a rotated donor via make_incorrect_mask.
    """
    ids = sorted(image_ids)
    if len(ids) < max(2, per_condition):
        raise EstimatorError(
            f"need at least {max(2, per_condition)} images, got {len(ids)}"
        )
    total = n_sets * per_condition
    rng = np.random.default_rng(seed)

    def tickets() -> list[str]:
        order = list(ids)
        rng.shuffle(order)
        return [order[k % len(order)] for k in range(total)]

    for _ in range(50):
        correct_tickets = tickets()
        incorrect_tickets = tickets()
        ok = True
        for s in range(n_sets):
            chunk = correct_tickets[s * per_condition : (s + 1) * per_condition]
            chunk2 = incorrect_tickets[s * per_condition : (s + 1) * per_condition]
            if len(set(chunk)) < len(chunk) or len(set(chunk2)) < len(chunk2):
                ok = False
                break
            if len(ids) >= 2 * per_condition and set(chunk) & set(chunk2):
                ok = False
                break
        if ok:
            break
    else:
        raise EstimatorError(
            f"could not deal {n_sets} balanced sets from {len(ids)} images"
        )

    trials: list[StimulusTrial] = []
    for s in range(n_sets):
        for image_id in correct_tickets[s * per_condition : (s + 1) * per_condition]:
            trials.append(StimulusTrial(s, image_id, "correct", image_id, 0))
        for image_id in incorrect_tickets[s * per_condition : (s + 1) * per_condition]:
            donor = make_incorrect_mask(
                masks[image_id],
                [masks[i] for i in ids],
                rng_seed=int(rng.integers(0, 2**63)),
                max_corr=max_corr,
            )
            trials.append(
                StimulusTrial(s, image_id, "incorrect", donor.source_id, donor.rotation_deg)
            )
    return trials
