"""Synthetic respondents and the error-vs-questions subsampling sweep.

A synthetic world assigns every respondent a latent utility for every item
via low-rank Gaussian factors. Responses on each survey scale are monotone
transforms of noisy utilities, and held-out pairwise comparisons never
repeat an unordered pair within a respondent. The sweep repeatedly
subsamples each respondent's training data at increasing sizes, refits the
matching model, and scores it against the held-out comparisons.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .comparison import comparison_scores, fit_comparisons
from .data import (
    ComparisonRecord,
    ComparisonSet,
    Dataset,
    ResponseRecord,
    ScaleKind,
    SparseRatingMatrix,
    SurveyScale,
    Winner,
    z_normalize,
)
from .evaluation import (
    aggregate_test_error,
    borda_scores,
    build_aggregate_test_matrix,
    individual_test_error,
    mean_rating_ranking,
    model_test_error,
    ranking_from_scores,
)
from .factorization import FitConfig, fit, predict_row

DEFAULT_SIZES = (8, 16, 24, 32, 40, 48, 56, 64, 72)


class SweepMode(Enum):
    INDIVIDUAL = "individual"
    AGGREGATE = "aggregate"


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """Ground-truth low-rank utilities for simulated respondents."""

    true_U: np.ndarray
    true_V: np.ndarray
    true_rank: int
    noise_sd: float
    seed: int

    @property
    def m(self) -> int:
        return self.true_U.shape[0]

    @property
    def n(self) -> int:
        return self.true_V.shape[0]

    def utilities(self) -> np.ndarray:
        """The m x n matrix of noise-free respondent-item utilities."""
        return self.true_U @ self.true_V.T


def simulate_world(
    m: int, n: int, true_rank: int, noise_sd: float, seed: int
) -> SyntheticWorld:
    """Draw ground-truth factors from a seeded standard Gaussian."""
    if m < 2 or n < 2:
        raise ValueError("need at least 2 respondents and 2 items")
    if true_rank < 1:
        raise ValueError("true_rank must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    true_U = rng.standard_normal((m, true_rank))
    true_V = rng.standard_normal((n, true_rank))
    return SyntheticWorld(
        true_U=true_U, true_V=true_V, true_rank=true_rank, noise_sd=noise_sd, seed=seed
    )


def _respondent_id(i: int) -> str:
    return f"resp{i:04d}"


def _item_id(j: int) -> str:
    return f"item{j:04d}"


def _pairs_before(i: int, n: int) -> int:
    return i * (2 * n - i - 1) // 2


def _decode_pair(index: int, n: int) -> tuple[int, int]:
    """Map a flat index in [0, n(n-1)/2) to an unordered pair (i < j)."""
    i = int((2 * n - 1 - math.sqrt((2 * n - 1) ** 2 - 8 * index)) / 2)
    # correct any floating-point boundary slip
    while i > 0 and _pairs_before(i, n) > index:
        i -= 1
    while _pairs_before(i + 1, n) <= index:
        i += 1
    j = index - _pairs_before(i, n) + i + 1
    return i, j


def _elapsed_ms(rng: np.random.Generator, position: int, total: int, slow: bool) -> int:
    # lognormal around ~3.5s, declining with practice; slider queries slower
    base = rng.lognormal(mean=math.log(3500.0), sigma=0.35)
    practice = 1.0 - 0.4 * (position / max(total - 1, 1))
    factor = 1.7 if slow else 1.0
    return max(1, int(round(base * practice * factor)))


def _rating_values(scale: SurveyScale, noisy: np.ndarray) -> np.ndarray:
    """Monotone map from noisy utilities to the scale's integer values."""
    s = noisy.size
    if scale.kind is ScaleKind.R100:
        lo, hi = float(noisy.min()), float(noisy.max())
        if hi == lo:
            return np.full(s, 50, dtype=np.int64)
        mapped = 1.0 + 99.0 * (noisy - lo) / (hi - lo)
        return np.clip(np.rint(mapped), 1, 100).astype(np.int64)
    if scale.kind is ScaleKind.R5:
        ranks = np.empty(s, dtype=np.int64)
        ranks[np.argsort(noisy, kind="stable")] = np.arange(s)
        return (ranks * 5) // s + 1
    if scale.kind is ScaleKind.R2:
        return (noisy >= np.median(noisy)).astype(np.int64)
    raise ValueError("pairwise-comparison surveys have no rating values")


def generate_responses(
    world: SyntheticWorld,
    scale: SurveyScale,
    ratings_per_respondent: int = 80,
    heldout_pc_per_respondent: int = 20,
    *,
    context: str = "synthetic",
) -> Dataset:
    """Simulate one survey run over the world.

    Rating scales: each respondent rates ``ratings_per_respondent`` items
    sampled without replacement, then answers ``heldout_pc_per_respondent``
    held-out comparisons on fresh random pairs. The pairwise scale replaces
    the ratings with the same number of training comparisons; training and
    held-out pairs together never repeat an unordered pair for a
    respondent. Each response adds fresh Gaussian noise to the latent
    utility before the scale's monotone discretization.
    """
    m, n = world.m, world.n
    if ratings_per_respondent < 1 or heldout_pc_per_respondent < 1:
        raise ValueError("per-respondent counts must be positive")
    if ratings_per_respondent > n:
        raise ValueError(
            f"cannot rate {ratings_per_respondent} of {n} items without replacement"
        )
    n_pairs = n * (n - 1) // 2
    pc_mode = not scale.has_range
    needed_pairs = heldout_pc_per_respondent + (ratings_per_respondent if pc_mode else 0)
    if needed_pairs > n_pairs:
        raise ValueError(f"cannot draw {needed_pairs} distinct pairs from {n_pairs}")

    utilities = world.utilities()
    rng = np.random.default_rng([world.seed, 1])
    responses: list[ResponseRecord] = []
    entries: dict[tuple[int, int], float] = {}
    training: list[ComparisonRecord] = []
    heldout: list[ComparisonRecord] = []
    n_train = ratings_per_respondent
    total_queries = n_train + heldout_pc_per_respondent

    for i in range(m):
        rid = _respondent_id(i)
        if not pc_mode:
            items = rng.choice(n, size=n_train, replace=False)
            noisy = utilities[i, items] + world.noise_sd * rng.standard_normal(n_train)
            values = _rating_values(scale, noisy)
            for pos, (j, value) in enumerate(zip(items, values)):
                responses.append(
                    ResponseRecord(
                        respondent_id=rid,
                        item_id=_item_id(int(j)),
                        value=int(value),
                        elapsed_ms=_elapsed_ms(
                            rng, pos, total_queries, scale.kind is ScaleKind.R100
                        ),
                    )
                )
                entries[(i, int(j))] = float(value)

        pair_count = heldout_pc_per_respondent + (n_train if pc_mode else 0)
        pair_codes = rng.choice(n_pairs, size=pair_count, replace=False)
        for q, code in enumerate(pair_codes):
            a, b = _decode_pair(int(code), n)
            if rng.random() < 0.5:
                a, b = b, a
            ua = utilities[i, a] + world.noise_sd * rng.standard_normal()
            ub = utilities[i, b] + world.noise_sd * rng.standard_normal()
            winner = Winner.LEFT if ua > ub else Winner.RIGHT
            is_training = pc_mode and q < n_train
            position = q if pc_mode else n_train + q
            rec = ComparisonRecord(
                respondent_id=rid,
                item_left=_item_id(a),
                item_right=_item_id(b),
                winner=winner,
                elapsed_ms=_elapsed_ms(rng, position, total_queries, False),
            )
            (training if is_training else heldout).append(rec)

    respondent_ids = tuple(_respondent_id(i) for i in range(m))
    item_ids = tuple(_item_id(j) for j in range(n))
    return Dataset(
        context=context,
        scale=scale,
        responses=tuple(responses),
        ratings=SparseRatingMatrix(m, n, entries),
        training_comparisons=ComparisonSet.from_records(training),
        heldout_comparisons=ComparisonSet.from_records(heldout),
        respondent_ids=respondent_ids,
        item_ids=item_ids,
    )


@dataclass(frozen=True)
class SweepConfig:
    """Sizes, draw count, fit settings, and scoring mode for a sweep."""

    sizes: tuple[int, ...] = DEFAULT_SIZES
    draws: int = 100
    fit: FitConfig = field(default_factory=lambda: FitConfig(k=4, gamma=1.0))
    mode: SweepMode = SweepMode.INDIVIDUAL

    def __post_init__(self) -> None:
        if not self.sizes or any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be positive")
        if self.draws < 1:
            raise ValueError("draws must be at least 1")


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    """Mean and spread of test error at each training-set size."""

    sizes: tuple[int, ...]
    mean_error: np.ndarray
    sd_error: np.ndarray
    draws: int

    def to_csv(self, path: str | Path, *, preamble: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if preamble:
                fh.write(preamble + "\n")
            fh.write("size,mean_error,sd,draws\n")
            for s, mean, sd in zip(self.sizes, self.mean_error, self.sd_error):
                fh.write(f"{s},{float(mean)!r},{float(sd)!r},{self.draws}\n")


def _prepare_rating_training(dataset: Dataset):
    grouped = dataset.responses_by_respondent()
    per_respondent = []
    for rid in dataset.respondent_ids:
        i = dataset.respondent_index[rid]
        cells = [
            (i, dataset.item_index[rec.item_id], float(rec.value))
            for rec in grouped[rid]
        ]
        per_respondent.append(cells)
    return per_respondent


def _sample_rating_matrix(per_respondent, dataset: Dataset, size: int, rng):
    entries: dict[tuple[int, int], float] = {}
    for cells in per_respondent:
        for idx in rng.choice(len(cells), size=size, replace=False):
            i, j, v = cells[idx]
            entries[(i, j)] = v
    return SparseRatingMatrix(dataset.m, dataset.n, entries)


def _sample_comparisons(per_respondent, size: int, rng) -> ComparisonSet:
    records = []
    for recs in per_respondent:
        for idx in sorted(rng.choice(len(recs), size=size, replace=False)):
            records.append(recs[idx])
    return ComparisonSet(tuple(records))


def run_sweep(dataset: Dataset, config: SweepConfig, *, threads: int = 1) -> ErrorCurve:
    """Error-vs-questions curve over seeded independent training subsamples.

    For each size s and draw d, every respondent's training data is
    subsampled to s responses using a stream derived from (seed, s, d), the
    matching model is refit, and the draw is scored against the held-out
    comparisons: per-respondent score orderings in individual mode, a
    single global ranking against the pooled held-out counts in aggregate
    mode. Results are deterministic in (dataset, config), independent of
    ``threads``.
    """
    pc_mode = not dataset.scale.has_range
    if pc_mode:
        per_resp_train = [
            list(dataset.training_comparisons.by_respondent().get(rid, ComparisonSet(())))
            for rid in dataset.respondent_ids
        ]
    else:
        per_resp_train = _prepare_rating_training(dataset)
    available = min((len(t) for t in per_resp_train), default=0)
    max_size = max(config.sizes)
    if max_size > available:
        raise ValueError(
            f"size {max_size} exceeds the {available} training responses "
            "available for some respondent"
        )
    heldout_by_resp = dataset.heldout_comparisons.by_respondent()
    missing = [rid for rid in dataset.respondent_ids if rid not in heldout_by_resp]
    if missing:
        raise ValueError(f"no held-out comparisons for respondent {missing[0]!r}")

    normalize = dataset.scale.is_normalized
    test_matrix = None
    if config.mode is SweepMode.AGGREGATE:
        test_matrix = build_aggregate_test_matrix(
            dataset.heldout_comparisons, dataset.n, dataset.item_index
        )

    def one_draw(size: int, draw: int) -> float:
        rng = np.random.default_rng([config.fit.seed, size, draw])
        fit_seed = int(
            np.random.SeedSequence([config.fit.seed, size, draw, 1]).generate_state(1)[0]
        )
        task_fit = FitConfig(
            k=config.fit.k,
            gamma=config.fit.gamma,
            max_sweeps=config.fit.max_sweeps,
            rel_tol=config.fit.rel_tol,
            seed=fit_seed,
            init_scale=config.fit.init_scale,
        )
        if pc_mode:
            sample = _sample_comparisons(per_resp_train, size, rng)
            if config.mode is SweepMode.AGGREGATE:
                table = borda_scores(sample, dataset.n, dataset.item_index)
                ranking = ranking_from_scores(table.scores)
                return aggregate_test_error(ranking, test_matrix)
            model = fit_comparisons(
                sample, dataset.m, dataset.n, task_fit,
                dataset.respondent_index, dataset.item_index,
            )
            score_row = lambda i: comparison_scores(model, i)
        else:
            matrix = _sample_rating_matrix(per_resp_train, dataset, size, rng)
            if normalize:
                matrix = z_normalize(matrix)
            if config.mode is SweepMode.AGGREGATE:
                ranking = mean_rating_ranking(matrix, dataset.scale)
                return aggregate_test_error(ranking, test_matrix)
            model = fit(matrix, task_fit)
            score_row = lambda i: predict_row(model, i)

        errors = [
            individual_test_error(
                score_row(dataset.respondent_index[rid]),
                heldout_by_resp[rid],
                dataset.item_index,
            )
            for rid in dataset.respondent_ids
        ]
        return model_test_error(errors)

    tasks = [(size, draw) for size in config.sizes for draw in range(config.draws)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda t: one_draw(*t), tasks))
    else:
        values = [one_draw(size, draw) for size, draw in tasks]
    results = dict(zip(tasks, values))

    means, sds = [], []
    for size in config.sizes:
        draws = np.array([results[(size, d)] for d in range(config.draws)])
        means.append(float(draws.mean()))
        sds.append(float(draws.std(ddof=0)))
    return ErrorCurve(
        sizes=tuple(config.sizes),
        mean_error=np.array(means),
        sd_error=np.array(sds),
        draws=config.draws,
    )
