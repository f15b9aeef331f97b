"""Regularized matrix factorization for sparse rating matrices.

Minimizes, over factor matrices U (m x k) and V (n x k),

    sum_{(i,j) observed} (x_ij - u_i . v_j)^2 + gamma * (||U||_F^2 + ||V||_F^2)

by alternating ridge sweeps: with V fixed, each row u_i has a closed-form
solution against respondent i's observed entries, and symmetrically for the
rows of V. Every sweep weakly decreases the objective. Both structural
regimes are supported: gamma=0 with small k (rank-constrained) and gamma>0
with k at full dimension (norm-constrained).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SparseRatingMatrix


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters and run controls for a single factorization fit.

    ``init_scale`` of None picks sqrt(mean|x| / k) from the data, keeping
    initial predictions on the scale of the observations.
    """

    k: int
    gamma: float = 0.0
    max_sweeps: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    init_scale: float | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("rank k must be at least 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.init_scale is not None and self.init_scale <= 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True, eq=False)
class FactorModel:
    """A fitted factorization with cold-start fallback statistics.

    Rows of U are respondent coordinates, rows of V item coordinates, and
    the prediction for an observed-row/observed-column cell is their inner
    product. ``row_means``/``col_means`` are NaN where that row/column had
    no training observations; prediction falls back along
    row mean -> column mean -> global mean.
    """

    U: np.ndarray
    V: np.ndarray
    k: int
    gamma: float
    row_means: np.ndarray
    col_means: np.ndarray
    global_mean: float
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ValueError("factors must be 2-d arrays")
        if self.U.shape[1] != self.k or self.V.shape[1] != self.k:
            raise ValueError("factor column count must equal k")
        if self.k < 1:
            raise ValueError("rank k must be at least 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.row_means.shape != (self.m,) or self.col_means.shape != (self.n,):
            raise ValueError("fallback means must match factor dimensions")

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]


def objective(model: FactorModel, matrix: SparseRatingMatrix) -> float:
    """Squared reconstruction error on observed cells plus the norm penalty."""
    if model.m != matrix.m or model.n != matrix.n:
        raise ValueError(
            f"model is {model.m}x{model.n} but matrix is {matrix.m}x{matrix.n}"
        )
    rows, cols, vals = matrix.to_arrays()
    residual = vals - np.einsum("ij,ij->i", model.U[rows], model.V[cols])
    penalty = model.gamma * (np.sum(model.U**2) + np.sum(model.V**2))
    return float(np.sum(residual**2) + penalty)


def _solve_factor_rows(
    target: np.ndarray,
    other: np.ndarray,
    obs_cols: Sequence[np.ndarray],
    obs_vals: Sequence[np.ndarray],
    gamma: float,
) -> None:
    """Closed-form ridge update of every row of ``target`` in place.

    Row r minimizes sum_j (x_rj - w . other_j)^2 + gamma ||w||^2 over its
    observed entries. gamma=0 uses the minimum-norm least-squares solution,
    which still minimizes the fit term exactly. Rows with no observations
    are set to zero (objective-neutral for any gamma).
    """
    k = other.shape[1]
    eye = np.eye(k)
    for r in range(target.shape[0]):
        cols = obs_cols[r]
        if cols.size == 0:
            target[r] = 0.0
            continue
        A = other[cols]
        b = obs_vals[r]
        if gamma > 0:
            target[r] = np.linalg.solve(A.T @ A + gamma * eye, A.T @ b)
        else:
            target[r] = np.linalg.lstsq(A, b, rcond=None)[0]


def fit(matrix: SparseRatingMatrix, config: FitConfig) -> FactorModel:
    """Fit factors to the observed entries by alternating ridge sweeps.

    Factors start from a seeded zero-mean Gaussian, then alternate
    closed-form row updates until the relative objective decrease drops
    below ``rel_tol`` or ``max_sweeps`` is reached. The recorded
    ``objective_trace`` holds the objective at initialization and after
    each sweep; it is nonincreasing.
    """
    if matrix.is_empty:
        raise ValueError("cannot fit an empty matrix")
    m, n, k = matrix.m, matrix.n, config.k
    rows, cols, vals = matrix.to_arrays()

    by_row_cols: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * m
    by_row_vals: list[np.ndarray] = [np.empty(0)] * m
    order = np.argsort(rows, kind="stable")
    split_at = np.searchsorted(rows[order], np.arange(1, m))
    for i, (c, v) in enumerate(zip(np.split(cols[order], split_at),
                                   np.split(vals[order], split_at))):
        by_row_cols[i], by_row_vals[i] = c, v

    by_col_rows: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * n
    by_col_vals: list[np.ndarray] = [np.empty(0)] * n
    order = np.argsort(cols, kind="stable")
    split_at = np.searchsorted(cols[order], np.arange(1, n))
    for j, (r, v) in enumerate(zip(np.split(rows[order], split_at),
                                   np.split(vals[order], split_at))):
        by_col_rows[j], by_col_vals[j] = r, v

    scale = config.init_scale
    if scale is None:
        scale = math.sqrt(float(np.mean(np.abs(vals))) / k)
    rng = np.random.default_rng(config.seed)
    U = rng.normal(0.0, scale, size=(m, k)) if scale > 0 else np.zeros((m, k))
    V = rng.normal(0.0, scale, size=(n, k)) if scale > 0 else np.zeros((n, k))

    def current_objective() -> float:
        residual = vals - np.einsum("ij,ij->i", U[rows], V[cols])
        return float(
            np.sum(residual**2) + config.gamma * (np.sum(U**2) + np.sum(V**2))
        )

    trace = [current_objective()]
    for _ in range(config.max_sweeps):
        _solve_factor_rows(U, V, by_row_cols, by_row_vals, config.gamma)
        _solve_factor_rows(V, U, by_col_rows, by_col_vals, config.gamma)
        obj = current_objective()
        if not math.isfinite(obj):
            raise RuntimeError("factorization diverged to a non-finite objective")
        prev = trace[-1]
        trace.append(obj)
        if prev - obj <= config.rel_tol * max(prev, 1e-300):
            break

    row_means = np.full(m, np.nan)
    col_means = np.full(n, np.nan)
    np_row_counts = np.bincount(rows, minlength=m)
    np_col_counts = np.bincount(cols, minlength=n)
    row_sums = np.bincount(rows, weights=vals, minlength=m)
    col_sums = np.bincount(cols, weights=vals, minlength=n)
    observed_rows = np_row_counts > 0
    observed_cols = np_col_counts > 0
    row_means[observed_rows] = row_sums[observed_rows] / np_row_counts[observed_rows]
    col_means[observed_cols] = col_sums[observed_cols] / np_col_counts[observed_cols]

    return FactorModel(
        U=U,
        V=V,
        k=k,
        gamma=config.gamma,
        row_means=row_means,
        col_means=col_means,
        global_mean=float(np.mean(vals)),
        objective_trace=tuple(trace),
    )


def predict(model: FactorModel, i: int, j: int) -> float:
    """Predicted rating for cell (i, j), with cold-start fallbacks."""
    if not 0 <= i < model.m:
        raise IndexError(f"respondent index {i} outside [0, {model.m})")
    if not 0 <= j < model.n:
        raise IndexError(f"item index {j} outside [0, {model.n})")
    row_seen = not math.isnan(model.row_means[i])
    col_seen = not math.isnan(model.col_means[j])
    if row_seen and col_seen:
        return float(model.U[i] @ model.V[j])
    if row_seen:
        return float(model.row_means[i])
    if col_seen:
        return float(model.col_means[j])
    return model.global_mean


def predict_row(model: FactorModel, i: int) -> np.ndarray:
    """Predicted ratings for respondent i across all items (vectorized)."""
    if not 0 <= i < model.m:
        raise IndexError(f"respondent index {i} outside [0, {model.m})")
    col_unseen = np.isnan(model.col_means)
    if math.isnan(model.row_means[i]):
        scores = np.where(col_unseen, model.global_mean, model.col_means)
        return scores.astype(np.float64)
    scores = model.V @ model.U[i]
    scores[col_unseen] = model.row_means[i]
    return scores


@dataclass(frozen=True, eq=False)
class CvReport:
    """Grid of mean held-out RMSEs and the winning configuration."""

    grid: tuple[tuple[int, float, float], ...]
    best: FitConfig
    scheme: str

    def to_csv(self, path: str | Path, *, preamble: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if preamble:
                fh.write(preamble + "\n")
            fh.write("k,gamma,mean_rmse,best\n")
            for k, gamma, err in self.grid:
                is_best = int(k == self.best.k and gamma == self.best.gamma)
                fh.write(f"{k},{gamma!r},{err!r},{is_best}\n")


def cross_validate(
    matrix: SparseRatingMatrix,
    k_grid: Sequence[int],
    gamma_grid: Sequence[float],
    holdout_fraction: float = 0.2,
    repeats: int = 10,
    seed: int = 0,
    *,
    max_sweeps: int = 200,
    rel_tol: float = 1e-5,
) -> CvReport:
    """Select (k, gamma) by repeated random holdout over observed indices.

    Every grid cell is scored on the same ``repeats`` seeded splits: fit on
    the training portion, compute RMSE on the held-out entries (cold-start
    fallbacks included), and average. The best cell minimizes mean RMSE,
    with ties broken toward smaller k and then smaller gamma.
    """
    if not k_grid or not gamma_grid:
        raise ValueError("hyperparameter grids must be nonempty")
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie strictly between 0 and 1")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if len(matrix) < 10:
        raise ValueError("need at least 10 observed entries to cross-validate")

    rows, cols, vals = matrix.to_arrays()
    count = len(vals)
    n_holdout = min(max(1, round(holdout_fraction * count)), count - 1)

    splits = []
    for r in range(repeats):
        perm = np.random.default_rng([seed, r]).permutation(count)
        splits.append((perm[n_holdout:], perm[:n_holdout]))

    grid_entries: list[tuple[int, float, float]] = []
    for ki, k in enumerate(k_grid):
        for gi, gamma in enumerate(gamma_grid):
            errors = []
            for r, (train_idx, hold_idx) in enumerate(splits):
                train = SparseRatingMatrix(
                    matrix.m,
                    matrix.n,
                    {
                        (int(rows[t]), int(cols[t])): float(vals[t])
                        for t in train_idx
                    },
                )
                fit_seed = int(
                    np.random.SeedSequence([seed, ki, gi, r]).generate_state(1)[0]
                )
                model = fit(
                    train,
                    FitConfig(
                        k=k,
                        gamma=gamma,
                        max_sweeps=max_sweeps,
                        rel_tol=rel_tol,
                        seed=fit_seed,
                    ),
                )
                preds = np.array(
                    [predict(model, int(rows[t]), int(cols[t])) for t in hold_idx]
                )
                errors.append(float(np.sqrt(np.mean((vals[hold_idx] - preds) ** 2))))
            grid_entries.append((int(k), float(gamma), float(np.mean(errors))))

    best_k, best_gamma, _ = min(grid_entries, key=lambda e: (e[2], e[0], e[1]))
    best = FitConfig(
        k=best_k, gamma=best_gamma, max_sweeps=max_sweeps, rel_tol=rel_tol, seed=seed
    )
    scheme = f"repeated-holdout(fraction={holdout_fraction}, repeats={repeats})"
    return CvReport(grid=tuple(grid_entries), best=best, scheme=scheme)


@dataclass(frozen=True, eq=False)
class ItemEmbedding:
    """Item coordinates on the two leading orthogonal factor dimensions.

    Dimensions are ordered by the fraction of the completed matrix's
    variance they explain; ``variance_fractions`` has one entry per model
    dimension, descending.
    """

    coords: np.ndarray
    variance_fractions: np.ndarray


def latent_embedding(model: FactorModel, matrix: SparseRatingMatrix) -> ItemEmbedding:
    """Orthogonalized 2-d item coordinates from the completed matrix.

    Takes the SVD of the completed matrix U V^T; item coordinates are the
    right singular vectors scaled by their singular values, ordered by
    descending singular value. A rank-1 model gets an all-zero second
    coordinate.
    """
    if model.m != matrix.m or model.n != matrix.n:
        raise ValueError(
            f"model is {model.m}x{model.n} but matrix is {matrix.m}x{matrix.n}"
        )
    if model.m == 0 or model.n == 0:
        raise ValueError("cannot embed an empty model")
    if not (np.all(np.isfinite(model.U)) and np.all(np.isfinite(model.V))):
        raise ValueError("model factors contain non-finite values (unfitted model?)")

    completed = model.U @ model.V.T
    _, singular, vt = np.linalg.svd(completed, full_matrices=False)
    total = float(np.sum(singular**2))

    fractions = np.zeros(model.k)
    usable = min(model.k, singular.size)
    if total > 0:
        fractions[:usable] = singular[:usable] ** 2 / total

    coords = np.zeros((model.n, 2))
    for d in range(min(2, singular.size)):
        coords[:, d] = singular[d] * vt[d]
    if model.k == 1:
        coords[:, 1] = 0.0
    return ItemEmbedding(coords=coords, variance_fractions=fractions)


def _means_to_json(means: np.ndarray) -> list[float | None]:
    return [None if math.isnan(x) else float(x) for x in means]


def _means_from_json(values: Sequence[float | None]) -> np.ndarray:
    return np.array([np.nan if x is None else float(x) for x in values])


def export_model(model: FactorModel, path: str | Path) -> None:
    """Write a fitted model to JSON (row-major factors, fallback means)."""
    payload = {
        "model_kind": "factorization",
        "k": model.k,
        "gamma": model.gamma,
        "m": model.m,
        "n": model.n,
        "U": model.U.tolist(),
        "V": model.V.tolist(),
        "row_means": _means_to_json(model.row_means),
        "col_means": _means_to_json(model.col_means),
        "global_mean": model.global_mean,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def import_model(path: str | Path) -> FactorModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("model_kind") != "factorization":
        raise ValueError(
            f"expected a factorization model, got {payload.get('model_kind')!r}"
        )
    U = np.array(payload["U"], dtype=np.float64).reshape(payload["m"], payload["k"])
    V = np.array(payload["V"], dtype=np.float64).reshape(payload["n"], payload["k"])
    return FactorModel(
        U=U,
        V=V,
        k=int(payload["k"]),
        gamma=float(payload["gamma"]),
        row_means=_means_from_json(payload["row_means"]),
        col_means=_means_from_json(payload["col_means"]),
        global_mean=float(payload["global_mean"]),
    )
