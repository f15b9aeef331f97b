"""Scoring predictions against held-out comparisons, and rank aggregation.

Individual error is the fraction of a respondent's held-out comparisons
whose winner the respondent's predicted item scores get wrong (exact score
ties count half). Aggregate error scores a single global ranking against
the pooled held-out comparison counts. Global rankings come from per-item
mean ratings (rating surveys) or borda scores (pairwise surveys).
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass
from typing import Mapping, Sequence

from .data import ComparisonSet, SparseRatingMatrix, SurveyScale, Winner, z_normalize


@dataclass(frozen=True, eq=False)
class BordaTable:
    """Pairwise win proportions and their per-item means.

    ``p[i, j]`` is the observed proportion of comparisons between items i
    and j won by i (0.5 where the pair was never observed; the diagonal is
    NaN and ignored). ``scores[i]`` averages row i over the other n-1 items.
    """

    p: np.ndarray
    scores: np.ndarray


@dataclass(frozen=True, eq=False)
class AggregateTestMatrix:
    """Pooled held-out win counts: ``counts[i, j]`` = times i beat j."""

    counts: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class GlobalRanking:
    """Item order (best first) and the per-item scores that induced it."""

    order: np.ndarray
    score_per_item: np.ndarray


def ranking_from_scores(scores: np.ndarray) -> GlobalRanking:
    """Sort items by descending score; ties go to the smaller item index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a nonempty 1-d array")
    order = np.lexsort((np.arange(scores.size), -scores))
    return GlobalRanking(order=order, score_per_item=scores)


def individual_test_error(
    predicted_scores: np.ndarray,
    heldout: ComparisonSet,
    item_index: Mapping[str, int],
) -> float:
    """Fraction of one respondent's held-out comparisons predicted wrong.

    Each comparison contributes 0 when the higher-scored item won, 1 when
    it lost, and 0.5 when the two predicted scores are exactly equal.
    """
    if heldout.is_empty:
        raise ValueError("held-out comparison set is empty")
    scores = np.asarray(predicted_scores, dtype=np.float64)
    mistakes = 0.0
    for rec in heldout:
        s_left = scores[item_index[rec.item_left]]
        s_right = scores[item_index[rec.item_right]]
        if s_left == s_right:
            mistakes += 0.5
        elif (s_left > s_right) != (rec.winner is Winner.LEFT):
            mistakes += 1.0
    return mistakes / len(heldout)


def model_test_error(per_respondent_errors: Sequence[float]) -> float:
    """Mean of the individual test errors."""
    if len(per_respondent_errors) == 0:
        raise ValueError("no individual errors to average")
    return float(np.mean(per_respondent_errors))


def borda_scores(
    comparisons: ComparisonSet, n: int, item_index: Mapping[str, int]
) -> BordaTable:
    """Aggregate comparisons into per-item mean win proportions.

    p[i, j] is wins of i over j divided by comparisons of the pair; pairs
    never observed contribute the indifferent prior 0.5, which keeps every
    score an average over all n-1 opponents.
    """
    if n < 2:
        raise ValueError("borda scores need at least 2 items")
    wins = np.zeros((n, n))
    for rec in comparisons:
        w = item_index[rec.winner_id]
        l = item_index[rec.loser_id]
        if not (0 <= w < n and 0 <= l < n):
            raise ValueError(f"comparison item index outside [0, {n})")
        wins[w, l] += 1.0
    p = np.full((n, n), 0.5)
    # mirror entries as 1 - p so antisymmetry holds exactly
    upper_i, upper_j = np.triu_indices(n, k=1)
    pair_total = wins[upper_i, upper_j] + wins[upper_j, upper_i]
    observed = pair_total > 0
    frac = wins[upper_i[observed], upper_j[observed]] / pair_total[observed]
    p[upper_i[observed], upper_j[observed]] = frac
    p[upper_j[observed], upper_i[observed]] = 1.0 - frac
    np.fill_diagonal(p, np.nan)
    scores = np.nansum(p, axis=1) / (n - 1)
    return BordaTable(p=p, scores=scores)


def mean_rating_ranking(
    matrix: SparseRatingMatrix, scale: SurveyScale
) -> GlobalRanking:
    """Rank items by mean observed rating (respondent-normalized for R5/R100).

    Ratings on the 5-point and 100-point scales are z-normalized per
    respondent first, so additive or multiplicative respondent quirks cancel;
    binary ratings are averaged raw. Items with no observations take the
    global mean. Ties break toward the smaller item index.
    """
    if matrix.is_empty:
        raise ValueError("cannot rank items of an empty matrix")
    if scale.is_normalized:
        matrix = z_normalize(matrix)
    sums = np.zeros(matrix.n)
    counts = np.zeros(matrix.n)
    for (_, j), v in matrix.entries.items():
        sums[j] += v
        counts[j] += 1.0
    global_mean = sums.sum() / counts.sum()
    means = np.full(matrix.n, global_mean)
    observed = counts > 0
    means[observed] = sums[observed] / counts[observed]
    return ranking_from_scores(means)


def build_aggregate_test_matrix(
    heldout: ComparisonSet, n: int, item_index: Mapping[str, int]
) -> AggregateTestMatrix:
    """Pool held-out comparisons across respondents into win counts."""
    counts = np.zeros((n, n), dtype=np.int64)
    for rec in heldout:
        w = item_index[rec.winner_id]
        l = item_index[rec.loser_id]
        if not (0 <= w < n and 0 <= l < n):
            raise ValueError(f"comparison item index outside [0, {n})")
        counts[w, l] += 1
    return AggregateTestMatrix(counts=counts)


def aggregate_test_error(
    ranking: GlobalRanking, test_matrix: AggregateTestMatrix
) -> float:
    """Proportion of pooled held-out comparisons the ranking contradicts.

    A comparison won by item j counts as a mistake when the ranking places
    the loser above j; the denominator is the total comparison count.
    """
    counts = test_matrix.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("aggregate test matrix has no comparisons")
    # position[i] = rank of item i (0 = best)
    position = np.empty(test_matrix.n, dtype=np.int64)
    position[ranking.order] = np.arange(test_matrix.n)
    winners, losers = np.nonzero(counts)
    mistaken = position[winners] > position[losers]
    mistakes = counts[winners[mistaken], losers[mistaken]].sum()
    return float(mistakes / total)
