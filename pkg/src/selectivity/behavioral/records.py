"""Raw behavioral record types and their CSV ingestion.

Four record kinds, one CSV each:

    patch_ratings.csv   image_id,grid_row,grid_col,participant_id,rating
    discrimination.csv  image_id,x,y,condition,response,participant_id
    chains.csv          image_id,chain_id,iteration,x,y
    fixations.csv       image_id,task,x,y

All loaders validate fields and raise SchemaError carrying the 1-based file
line number of the offending row.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

from ..errors import SchemaError

PATCH_GRID = (12, 12)
LIKERT_RANGE = (1, 6)
DISCRIMINATION_CONDITIONS = ("same", "shifted")
FIXATION_TASKS = ("free", "saliency", "object")
CHAIN_FINAL_ITERATION = 20


@dataclass(frozen=True)
class PatchRating:
    image_id: str
    grid_row: int
    grid_col: int
    participant_id: str
    rating: int


@dataclass(frozen=True)
class DiscriminationTrial:
    image_id: str
    x: float
    y: float
    condition: str   # stimulus: "same" or "shifted"
    response: str    # answer:   "same" or "shifted"
    participant_id: str


@dataclass(frozen=True)
class ChainPoint:
    image_id: str
    chain_id: str
    iteration: int
    x: float
    y: float


@dataclass(frozen=True)
class Fixation:
    image_id: str
    task: str        # "free", "saliency", or "object"
    x: float
    y: float


class _Row:
    """One CSV row with typed, error-reporting field access."""

    def __init__(self, path: Path, line: int, values: dict[str, str]):
        self.path = path
        self.line = line
        self.values = values

    def fail(self, message: str) -> SchemaError:
        return SchemaError(f"{self.path} row {self.line}: {message}")

    def text(self, field: str) -> str:
        value = self.values.get(field)
        if value is None or value == "":
            raise self.fail(f"missing value for {field!r}")
        return value

    def integer(self, field: str) -> int:
        raw = self.text(field)
        try:
            return int(raw)
        except ValueError:
            raise self.fail(f"{field}={raw!r} is not an integer") from None

    def real(self, field: str) -> float:
        raw = self.text(field)
        try:
            return float(raw)
        except ValueError:
            raise self.fail(f"{field}={raw!r} is not a number") from None

    def choice(self, field: str, allowed: Sequence[str]) -> str:
        value = self.text(field)
        if value not in allowed:
            raise self.fail(f"{field}={value!r} not one of {list(allowed)}")
        return value


def _read_rows(path: str | Path, columns: Sequence[str]) -> Iterable[_Row]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected header {','.join(columns)}")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: header missing column(s) {missing}")
        for values in reader:
            yield _Row(path, reader.line_num, values)


def load_patch_ratings(path: str | Path) -> list[PatchRating]:
    out = []
    rows, cols = PATCH_GRID
    lo, hi = LIKERT_RANGE
    for row in _read_rows(path, ("image_id", "grid_row", "grid_col", "participant_id", "rating")):
        r = row.integer("grid_row")
        c = row.integer("grid_col")
        if not (0 <= r < rows and 0 <= c < cols):
            raise row.fail(f"grid cell ({r}, {c}) outside {rows}x{cols} grid")
        rating = row.integer("rating")
        if not lo <= rating <= hi:
            raise row.fail(f"rating {rating} outside Likert range {lo}..{hi}")
        out.append(
            PatchRating(row.text("image_id"), r, c, row.text("participant_id"), rating)
        )
    return out


def load_discrimination(path: str | Path) -> list[DiscriminationTrial]:
    out = []
    for row in _read_rows(path, ("image_id", "x", "y", "condition", "response", "participant_id")):
        out.append(
            DiscriminationTrial(
                row.text("image_id"),
                row.real("x"),
                row.real("y"),
                row.choice("condition", DISCRIMINATION_CONDITIONS),
                row.choice("response", DISCRIMINATION_CONDITIONS),
                row.text("participant_id"),
            )
        )
    return out


def load_chains(path: str | Path) -> list[ChainPoint]:
    out = []
    seen: set[tuple[str, str, int]] = set()
    for row in _read_rows(path, ("image_id", "chain_id", "iteration", "x", "y")):
        it = row.integer("iteration")
        if not 0 <= it <= CHAIN_FINAL_ITERATION:
            raise row.fail(f"iteration {it} outside 0..{CHAIN_FINAL_ITERATION}")
        key = (row.text("image_id"), row.text("chain_id"), it)
        if key in seen:
            raise row.fail(f"duplicate point for chain {key[1]!r} iteration {it}")
        seen.add(key)
        out.append(ChainPoint(key[0], key[1], it, row.real("x"), row.real("y")))
    return out


def load_fixations(path: str | Path) -> list[Fixation]:
    out = []
    for row in _read_rows(path, ("image_id", "task", "x", "y")):
        out.append(
            Fixation(
                row.text("image_id"),
                row.choice("task", FIXATION_TASKS),
                row.real("x"),
                row.real("y"),
            )
        )
    return out


R = TypeVar("R")


def by_image(records: Iterable[R]) -> dict[str, list[R]]:
    grouped: dict[str, list[R]] = defaultdict(list)
    for record in records:
        grouped[record.image_id].append(record)  # type: ignore[attr-defined]
    return dict(grouped)


def unit_groups(records: Sequence[R]) -> list[list[R]]:
    """Partition records into bootstrap resampling units, in deterministic
    order: participants for ratings and discrimination trials, chains for
    chain points, and individual points for fixations."""
    if not records:
        raise ValueError("no records to form resampling units from")
    first = records[0]
    key: Callable[[R], str]
    if isinstance(first, (PatchRating, DiscriminationTrial)):
        key = lambda r: r.participant_id  # type: ignore[attr-defined]
    elif isinstance(first, ChainPoint):
        key = lambda r: r.chain_id  # type: ignore[attr-defined]
    elif isinstance(first, Fixation):
        return [[r] for r in records]
    else:
        raise TypeError(f"unsupported record type {type(first).__name__}")
    grouped: dict[str, list[R]] = defaultdict(list)
    for record in records:
        grouped[key(record)].append(record)
    return [grouped[k] for k in sorted(grouped)]
