"""Survey domain types, CSV ingestion, normalization, and descriptive summaries.

The central object is a :class:`Dataset`: a sparse respondent-by-item rating
matrix (for rating surveys) or a set of training comparisons (for pairwise
surveys), plus the held-out pairwise comparisons used for evaluation.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence


class DataFormatError(ValueError):
    """A survey file or record violates the expected format or an invariant."""


class ScaleKind(Enum):
    R2 = "r2"
    R5 = "r5"
    R100 = "r100"
    PC = "pc"


_SCALE_RANGES: dict[ScaleKind, tuple[int, int] | None] = {
    ScaleKind.R2: (0, 1),
    ScaleKind.R5: (1, 5),
    ScaleKind.R100: (1, 100),
    ScaleKind.PC: None,
}


@dataclass(frozen=True)
class SurveyScale:
    """One of the four supported survey types.

    Rating scales carry an integer range; the pairwise-comparison scale has
    no numeric range (``min_value`` and ``max_value`` are ``None``).
    """

    kind: ScaleKind
    min_value: int | None
    max_value: int | None

    def __post_init__(self) -> None:
        rng = _SCALE_RANGES[self.kind]
        if rng is None:
            if self.min_value is not None or self.max_value is not None:
                raise ValueError("pairwise-comparison scale carries no rating range")
        else:
            if (self.min_value, self.max_value) != rng:
                raise ValueError(f"{self.kind.value} scale range must be {rng}")

    @classmethod
    def from_kind(cls, kind: ScaleKind) -> "SurveyScale":
        rng = _SCALE_RANGES[kind]
        if rng is None:
            return cls(kind, None, None)
        return cls(kind, rng[0], rng[1])

    @classmethod
    def from_name(cls, name: str) -> "SurveyScale":
        try:
            kind = ScaleKind(name.lower())
        except ValueError:
            valid = ", ".join(k.value for k in ScaleKind)
            raise ValueError(f"unknown scale {name!r} (expected one of: {valid})") from None
        return cls.from_kind(kind)

    @property
    def has_range(self) -> bool:
        return self.kind is not ScaleKind.PC

    @property
    def is_normalized(self) -> bool:
        """Whether ratings on this scale are z-normalized before aggregation.

        Only the 5-point and 100-point scales are normalized; binary ratings
        stay on their raw {0, 1} encoding.
        """
        return self.kind in (ScaleKind.R5, ScaleKind.R100)

    def check_value(self, value: int) -> None:
        if not self.has_range:
            raise ValueError("pairwise-comparison scale has no rating values")
        assert self.min_value is not None and self.max_value is not None
        if not self.min_value <= value <= self.max_value:
            raise ValueError(
                f"rating {value} outside {self.kind.value} range "
                f"[{self.min_value}, {self.max_value}]"
            )


R2 = SurveyScale.from_kind(ScaleKind.R2)
R5 = SurveyScale.from_kind(ScaleKind.R5)
R100 = SurveyScale.from_kind(ScaleKind.R100)
PC = SurveyScale.from_kind(ScaleKind.PC)


class Winner(Enum):
    """Outcome of a pairwise comparison. TIE only ever appears in predictions."""

    LEFT = "left"
    RIGHT = "right"
    TIE = "tie"


@dataclass(frozen=True)
class ResponseRecord:
    """A single rating response, in the order it was answered."""

    respondent_id: str
    item_id: str
    value: int
    elapsed_ms: int

    def __post_init__(self) -> None:
        if self.elapsed_ms < 0:
            raise ValueError("elapsed_ms must be nonnegative")


@dataclass(frozen=True)
class ComparisonRecord:
    """A single answered pairwise comparison."""

    respondent_id: str
    item_left: str
    item_right: str
    winner: Winner
    elapsed_ms: int

    def __post_init__(self) -> None:
        if self.item_left == self.item_right:
            raise ValueError("comparison items must be distinct")
        if self.winner is Winner.TIE:
            raise ValueError("an answered comparison cannot be a tie")
        if self.elapsed_ms < 0:
            raise ValueError("elapsed_ms must be nonnegative")

    @property
    def winner_id(self) -> str:
        return self.item_left if self.winner is Winner.LEFT else self.item_right

    @property
    def loser_id(self) -> str:
        return self.item_right if self.winner is Winner.LEFT else self.item_left


@dataclass(frozen=True)
class ComparisonSet:
    """An ordered collection of comparison records.

    Loaded sets enforce that no respondent answers the same unordered item
    pair twice; directly constructed sets (e.g. for stress tests with
    deliberately repeated pairs) may skip that check via ``from_records``.
    """

    records: tuple[ComparisonRecord, ...]

    @classmethod
    def from_records(
        cls, records: Iterable[ComparisonRecord], validate_unique_pairs: bool = True
    ) -> "ComparisonSet":
        recs = tuple(records)
        if validate_unique_pairs:
            _check_unique_pairs(recs)
        return cls(recs)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ComparisonRecord]:
        return iter(self.records)

    @property
    def is_empty(self) -> bool:
        return not self.records

    def respondent_ids(self) -> list[str]:
        """Distinct respondent ids in first-seen order."""
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.respondent_id, None)
        return list(seen)

    def for_respondent(self, respondent_id: str) -> "ComparisonSet":
        return ComparisonSet(
            tuple(r for r in self.records if r.respondent_id == respondent_id)
        )

    def by_respondent(self) -> dict[str, "ComparisonSet"]:
        grouped: dict[str, list[ComparisonRecord]] = {}
        for rec in self.records:
            grouped.setdefault(rec.respondent_id, []).append(rec)
        return {rid: ComparisonSet(tuple(recs)) for rid, recs in grouped.items()}


def _check_unique_pairs(records: Sequence[ComparisonRecord]) -> None:
    seen: set[tuple[str, str, str]] = set()
    for rec in records:
        a, b = sorted((rec.item_left, rec.item_right))
        key = (rec.respondent_id, a, b)
        if key in seen:
            raise DataFormatError(
                f"respondent {rec.respondent_id!r} compares pair "
                f"({a!r}, {b!r}) more than once"
            )
        seen.add(key)


def distinct_unordered_pairs(n: int) -> int:
    """Number of distinct unordered item pairs over n items: n(n-1)/2."""
    if n < 0:
        raise ValueError("item count must be nonnegative")
    return n * (n - 1) // 2


@dataclass(frozen=True)
class SparseRatingMatrix:
    """A sparse m-by-n respondent-by-item matrix of observed ratings.

    ``entries`` maps (row, column) index pairs to values; absent pairs are
    unobserved. Treat instances as immutable: do not mutate ``entries``.
    """

    m: int
    n: int
    entries: dict[tuple[int, int], float]

    def __post_init__(self) -> None:
        if self.m < 0 or self.n < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        for (i, j) in self.entries:
            if not (0 <= i < self.m and 0 <= j < self.n):
                raise ValueError(
                    f"entry index ({i}, {j}) outside {self.m}x{self.n} matrix"
                )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def sorted_items(self) -> list[tuple[tuple[int, int], float]]:
        """Entries sorted by (row, column), for deterministic iteration."""
        return sorted(self.entries.items())

    def to_arrays(self):
        """Return (rows, cols, values) numpy arrays sorted by (row, column)."""
        import numpy as np

        if not self.entries:
            return (
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.int64),
                np.empty(0, dtype=np.float64),
            )
        items = self.sorted_items()
        rows = np.array([ij[0] for ij, _ in items], dtype=np.int64)
        cols = np.array([ij[1] for ij, _ in items], dtype=np.int64)
        vals = np.array([v for _, v in items], dtype=np.float64)
        return rows, cols, vals


def z_normalize(matrix: SparseRatingMatrix) -> SparseRatingMatrix:
    """Standardize each row of observed entries to mean 0 and unit spread.

    Uses the population (divide-by-N) standard deviation, so single-entry
    rows are well defined. Rows with zero spread map to all zeros. The
    sparsity pattern is unchanged and the operation is idempotent.
    """
    if matrix.is_empty:
        raise ValueError("cannot normalize an empty matrix")
    by_row: dict[int, list[tuple[int, float]]] = {}
    for (i, j), v in matrix.entries.items():
        by_row.setdefault(i, []).append((j, v))
    out: dict[tuple[int, int], float] = {}
    for i, pairs in by_row.items():
        values = [v for _, v in pairs]
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        sd = var**0.5
        for j, v in pairs:
            out[(i, j)] = 0.0 if sd == 0.0 else (v - mean) / sd
    return SparseRatingMatrix(matrix.m, matrix.n, out)


def coverage_probability(rated: int, total: int) -> float:
    """Probability a uniformly random distinct item pair misses the rated set.

    With ``rated`` of ``total`` items rated, two distinct items drawn
    uniformly at random include at least one unrated item with probability
    1 - rated*(rated-1) / (total*(total-1)).
    """
    if total < 2:
        raise ValueError("total item count must be at least 2")
    if rated < 0 or rated > total:
        raise ValueError("rated count must lie in [0, total]")
    return 1.0 - (rated * (rated - 1)) / (total * (total - 1))


@dataclass(frozen=True)
class Dataset:
    """A loaded (or simulated) survey: responses, comparisons, and id maps.

    ``responses`` preserves per-respondent answer order, which the timing
    summaries depend on. For rating scales the held-out comparisons are the
    test set; pairwise-comparison surveys additionally carry training
    comparisons and an empty rating matrix.
    """

    context: str
    scale: SurveyScale
    responses: tuple[ResponseRecord, ...]
    ratings: SparseRatingMatrix
    training_comparisons: ComparisonSet
    heldout_comparisons: ComparisonSet
    respondent_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @property
    def m(self) -> int:
        return len(self.respondent_ids)

    @property
    def n(self) -> int:
        return len(self.item_ids)

    @cached_property
    def respondent_index(self) -> dict[str, int]:
        return {rid: i for i, rid in enumerate(self.respondent_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {iid: j for j, iid in enumerate(self.item_ids)}

    def responses_by_respondent(self) -> dict[str, list[ResponseRecord]]:
        grouped: dict[str, list[ResponseRecord]] = {rid: [] for rid in self.respondent_ids}
        for rec in self.responses:
            grouped[rec.respondent_id].append(rec)
        return grouped


RATINGS_HEADER = ["respondent_id", "item_id", "value", "elapsed_ms"]
COMPARISONS_HEADER = ["respondent_id", "item_left", "item_right", "winner", "elapsed_ms"]


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header != expected_header:
            raise DataFormatError(
                f"{path}: bad header {header!r}, expected {expected_header!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(expected_header)} columns, got {len(row)}"
                )
            rows.append(row)
    return rows


def _parse_int(path: Path, lineno: int, token: str, column: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataFormatError(
            f"{path}:{lineno}: column {column!r} must be an integer, got {token!r}"
        ) from None


def read_responses(path: Path, scale: SurveyScale) -> list[ResponseRecord]:
    """Read a ratings CSV, validating types and the scale's value range."""
    records = []
    for offset, row in enumerate(_read_rows(path, RATINGS_HEADER)):
        lineno = offset + 2
        rid, iid = row[0], row[1]
        value = _parse_int(path, lineno, row[2], "value")
        elapsed = _parse_int(path, lineno, row[3], "elapsed_ms")
        try:
            scale.check_value(value)
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        if elapsed < 0:
            raise DataFormatError(f"{path}:{lineno}: elapsed_ms must be nonnegative")
        records.append(ResponseRecord(rid, iid, value, elapsed))
    return records


def read_comparisons(path: Path) -> ComparisonSet:
    """Read a comparisons CSV, enforcing per-respondent pair uniqueness."""
    records = []
    for offset, row in enumerate(_read_rows(path, COMPARISONS_HEADER)):
        lineno = offset + 2
        rid, left, right, winner_token = row[0], row[1], row[2], row[3]
        elapsed = _parse_int(path, lineno, row[4], "elapsed_ms")
        if winner_token not in (Winner.LEFT.value, Winner.RIGHT.value):
            raise DataFormatError(
                f"{path}:{lineno}: winner must be 'left' or 'right', got {winner_token!r}"
            )
        if left == right:
            raise DataFormatError(f"{path}:{lineno}: comparison items must be distinct")
        if elapsed < 0:
            raise DataFormatError(f"{path}:{lineno}: elapsed_ms must be nonnegative")
        records.append(ComparisonRecord(rid, left, right, Winner(winner_token), elapsed))
    try:
        return ComparisonSet.from_records(records)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def _build_matrix(
    responses: Sequence[ResponseRecord],
    respondent_index: Mapping[str, int],
    item_index: Mapping[str, int],
) -> SparseRatingMatrix:
    entries: dict[tuple[int, int], float] = {}
    for rec in responses:
        key = (respondent_index[rec.respondent_id], item_index[rec.item_id])
        if key in entries:
            raise DataFormatError(
                f"duplicate rating for respondent {rec.respondent_id!r}, "
                f"item {rec.item_id!r}"
            )
        entries[key] = float(rec.value)
    return SparseRatingMatrix(len(respondent_index), len(item_index), entries)


def load_dataset(
    ratings_path: str | Path | None,
    comparisons_path: str | Path,
    scale: SurveyScale,
    *,
    training_comparisons_path: str | Path | None = None,
    context: str = "",
) -> Dataset:
    """Load and validate a survey dataset from CSV files.

    For rating scales, ``ratings_path`` holds the training responses and
    ``comparisons_path`` the held-out test comparisons. For the
    pairwise-comparison scale there is no ratings file: training comparisons
    come from ``training_comparisons_path`` instead. Id-to-index maps are
    sorted lexicographically, so loading is deterministic.
    """
    if scale.has_range:
        if ratings_path is None:
            raise ValueError(f"{scale.kind.value} datasets require a ratings file")
        if training_comparisons_path is not None:
            raise ValueError("training comparisons only apply to pc datasets")
        responses = read_responses(Path(ratings_path), scale)
        if not responses:
            raise DataFormatError(f"{ratings_path}: no responses")
        heldout = read_comparisons(Path(comparisons_path))
        respondent_ids = tuple(sorted({r.respondent_id for r in responses}))
        item_ids = tuple(sorted({r.item_id for r in responses}))
        item_set, resp_set = set(item_ids), set(respondent_ids)
        for rec in heldout:
            for unknown, kind in (
                (rec.respondent_id not in resp_set, "respondent"),
                (rec.item_left not in item_set, "item"),
                (rec.item_right not in item_set, "item"),
            ):
                if unknown:
                    raise DataFormatError(
                        f"comparison references unknown {kind} "
                        f"(respondent={rec.respondent_id!r}, items="
                        f"{rec.item_left!r}/{rec.item_right!r})"
                    )
        resp_index = {rid: i for i, rid in enumerate(respondent_ids)}
        item_idx = {iid: j for j, iid in enumerate(item_ids)}
        matrix = _build_matrix(responses, resp_index, item_idx)
        return Dataset(
            context=context,
            scale=scale,
            responses=tuple(responses),
            ratings=matrix,
            training_comparisons=ComparisonSet(()),
            heldout_comparisons=heldout,
            respondent_ids=respondent_ids,
            item_ids=item_ids,
        )

    if ratings_path is not None:
        raise ValueError("pc datasets carry no ratings file")
    if training_comparisons_path is None:
        raise ValueError("pc datasets require a training comparisons file")
    training = read_comparisons(Path(training_comparisons_path))
    heldout = read_comparisons(Path(comparisons_path))
    if training.is_empty:
        raise DataFormatError(f"{training_comparisons_path}: no comparisons")
    all_ids = set()
    respondents = set()
    for cset in (training, heldout):
        for rec in cset:
            respondents.add(rec.respondent_id)
            all_ids.add(rec.item_left)
            all_ids.add(rec.item_right)
    respondent_ids = tuple(sorted(respondents))
    item_ids = tuple(sorted(all_ids))
    return Dataset(
        context=context,
        scale=scale,
        responses=(),
        ratings=SparseRatingMatrix(len(respondent_ids), len(item_ids), {}),
        training_comparisons=training,
        heldout_comparisons=heldout,
        respondent_ids=respondent_ids,
        item_ids=item_ids,
    )


def write_responses(path: str | Path, responses: Iterable[ResponseRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_HEADER)
        for rec in responses:
            writer.writerow([rec.respondent_id, rec.item_id, rec.value, rec.elapsed_ms])


def write_comparisons(path: str | Path, comparisons: Iterable[ComparisonRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISONS_HEADER)
        for rec in comparisons:
            writer.writerow(
                [rec.respondent_id, rec.item_left, rec.item_right,
                 rec.winner.value, rec.elapsed_ms]
            )


def save_dataset(dataset: Dataset, out_dir: str | Path) -> dict[str, Path]:
    """Write a dataset back to its CSV files; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}
    if dataset.scale.has_range:
        paths["ratings"] = out / "ratings.csv"
        write_responses(paths["ratings"], dataset.responses)
    else:
        paths["training_comparisons"] = out / "training_comparisons.csv"
        write_comparisons(paths["training_comparisons"], dataset.training_comparisons)
    paths["heldout_comparisons"] = out / "heldout_comparisons.csv"
    write_comparisons(paths["heldout_comparisons"], dataset.heldout_comparisons)
    return paths


@dataclass(frozen=True)
class Summary:
    """Response-value histogram plus per-block median answer times."""

    histogram: dict[int, int]
    block_median_seconds: list[float] = field(default_factory=list)


def summarize(dataset: Dataset, block_size: int = 8) -> Summary:
    """Histogram of rating values and median time per block of queries.

    Block b's entry is the median, across respondents with a complete block
    b, of the summed elapsed time (seconds) of queries
    b*block_size .. (b+1)*block_size - 1 in answer order. Trailing incomplete
    blocks are dropped. Pairwise datasets have an empty histogram and their
    timing comes from the training comparisons.
    """
    if block_size < 1:
        raise ValueError("block_size must be at least 1")
    if not dataset.responses and dataset.training_comparisons.is_empty:
        raise ValueError("cannot summarize an empty dataset")

    histogram: dict[int, int] = {}
    for rec in dataset.responses:
        histogram[rec.value] = histogram.get(rec.value, 0) + 1
    histogram = dict(sorted(histogram.items()))

    if dataset.scale.has_range:
        sequences = [
            [r.elapsed_ms for r in recs]
            for recs in dataset.responses_by_respondent().values()
        ]
    else:
        grouped = dataset.training_comparisons.by_respondent()
        sequences = [[r.elapsed_ms for r in grouped[rid]] for rid in sorted(grouped)]

    block_medians: list[float] = []
    n_blocks = max((len(seq) // block_size for seq in sequences), default=0)
    for b in range(n_blocks):
        totals = [
            sum(seq[b * block_size : (b + 1) * block_size]) / 1000.0
            for seq in sequences
            if len(seq) >= (b + 1) * block_size
        ]
        if not totals:
            break
        block_medians.append(statistics.median(totals))
    return Summary(histogram=histogram, block_median_seconds=block_medians)
