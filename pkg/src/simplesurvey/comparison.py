"""Latent factor model for pairwise-comparison surveys.

Respondent i prefers item a over item b when the margin
u_i . (v_a - v_b) is positive. Factors are fit by minimizing the logistic
loss over observed comparisons,

    sum_c log(1 + exp(-y_c * u_i . (v_a - v_b))) + gamma * (||U||_F^2 + ||V||_F^2)

with y_c = +1 when the left item won and -1 otherwise, using seeded
shuffled mini-batch gradient descent with a 1/sqrt(epoch) step decay.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import ComparisonSet, Winner
from .factorization import FitConfig

DEFAULT_STEP_SIZE = 0.05
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 64
_DEFAULT_INIT_SCALE = 0.1


@dataclass(frozen=True, eq=False)
class ComparisonModel:
    """Fitted comparison factors plus the schedule that produced them."""

    U: np.ndarray
    V: np.ndarray
    k: int
    gamma: float
    step_size: float
    epochs: int
    loss_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.U.shape[1] != self.k or self.V.shape[1] != self.k:
            raise ValueError("factor column count must equal k")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[0]


@dataclass(frozen=True)
class ComparisonPrediction:
    """Sign decision over the comparison margin; an exact zero is a tie."""

    winner: Winner
    score: float


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _resolve_indices(
    comparisons: ComparisonSet,
    m: int,
    n: int,
    respondent_index: Mapping[str, int],
    item_index: Mapping[str, int],
):
    resp = np.empty(len(comparisons), dtype=np.int64)
    left = np.empty(len(comparisons), dtype=np.int64)
    right = np.empty(len(comparisons), dtype=np.int64)
    y = np.empty(len(comparisons), dtype=np.float64)
    for c, rec in enumerate(comparisons):
        resp[c] = respondent_index[rec.respondent_id]
        left[c] = item_index[rec.item_left]
        right[c] = item_index[rec.item_right]
        y[c] = 1.0 if rec.winner is Winner.LEFT else -1.0
    if resp.size and (resp.min() < 0 or resp.max() >= m):
        raise ValueError("comparison respondent index outside [0, m)")
    if left.size and (min(left.min(), right.min()) < 0 or max(left.max(), right.max()) >= n):
        raise ValueError("comparison item index outside [0, n)")
    return resp, left, right, y


def _total_loss(U, V, resp, left, right, y, gamma) -> float:
    margins = np.einsum("ij,ij->i", U[resp], V[left] - V[right])
    fit_term = float(np.sum(np.logaddexp(0.0, -y * margins)))
    return fit_term + gamma * float(np.sum(U**2) + np.sum(V**2))


def fit_comparisons(
    comparisons: ComparisonSet,
    m: int,
    n: int,
    config: FitConfig,
    respondent_index: Mapping[str, int],
    item_index: Mapping[str, int],
    *,
    step_size: float = DEFAULT_STEP_SIZE,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> ComparisonModel:
    """Fit comparison factors by seeded mini-batch gradient descent.

    The per-epoch step size is ``step_size / sqrt(epoch)``. Training stops
    early once the relative per-epoch loss decrease falls below
    ``config.rel_tol``. The recorded ``loss_trace`` holds the full training
    loss at initialization and after each epoch.
    """
    if comparisons.is_empty:
        raise ValueError("cannot fit an empty comparison set")
    if step_size <= 0 or epochs < 1 or batch_size < 1:
        raise ValueError("step_size, epochs, and batch_size must be positive")
    resp, left, right, y = _resolve_indices(comparisons, m, n, respondent_index, item_index)
    count = len(comparisons)
    k, gamma = config.k, config.gamma

    scale = config.init_scale if config.init_scale is not None else _DEFAULT_INIT_SCALE
    rng = np.random.default_rng(config.seed)
    U = rng.normal(0.0, scale, size=(m, k))
    V = rng.normal(0.0, scale, size=(n, k))

    trace = [_total_loss(U, V, resp, left, right, y, gamma)]
    for epoch in range(1, epochs + 1):
        eta = step_size / math.sqrt(epoch)
        perm = rng.permutation(count)
        for start in range(0, count, batch_size):
            batch = perm[start : start + batch_size]
            i, a, b = resp[batch], left[batch], right[batch]
            yb = y[batch]
            diff = V[a] - V[b]
            margins = np.einsum("ij,ij->i", U[i], diff)
            # d(loss)/d(margin): -y * sigmoid(-y * margin)
            g = -yb * _sigmoid(-yb * margins)
            grad_u = g[:, None] * diff
            grad_va = g[:, None] * U[i]
            batch_grad_U = np.zeros_like(U)
            batch_grad_V = np.zeros_like(V)
            np.add.at(batch_grad_U, i, grad_u)
            np.add.at(batch_grad_V, a, grad_va)
            np.add.at(batch_grad_V, b, -grad_va)
            inv = 1.0 / len(batch)
            U -= eta * (batch_grad_U * inv + (2.0 * gamma / count) * U)
            V -= eta * (batch_grad_V * inv + (2.0 * gamma / count) * V)
        loss = _total_loss(U, V, resp, left, right, y, gamma)
        if not math.isfinite(loss):
            raise RuntimeError(
                "comparison training diverged to a non-finite loss at epoch "
                f"{epoch}; reduce the step size"
            )
        prev = trace[-1]
        trace.append(loss)
        if prev - loss <= config.rel_tol * max(prev, 1e-300):
            break

    return ComparisonModel(
        U=U,
        V=V,
        k=k,
        gamma=gamma,
        step_size=step_size,
        epochs=epochs,
        loss_trace=tuple(trace),
    )


def comparison_scores(model: ComparisonModel, i: int) -> np.ndarray:
    """Respondent i's latent score for every item (higher = preferred)."""
    if not 0 <= i < model.m:
        raise IndexError(f"respondent index {i} outside [0, {model.m})")
    return model.V @ model.U[i]


def predict_comparison(
    model: ComparisonModel, i: int, a: int, b: int
) -> ComparisonPrediction:
    """Decide the comparison (a vs b) for respondent i by margin sign."""
    if a == b:
        raise ValueError("comparison items must be distinct")
    if not 0 <= i < model.m:
        raise IndexError(f"respondent index {i} outside [0, {model.m})")
    if not (0 <= a < model.n and 0 <= b < model.n):
        raise IndexError(f"item index outside [0, {model.n})")
    score = float(model.U[i] @ (model.V[a] - model.V[b]))
    if score > 0:
        winner = Winner.LEFT
    elif score < 0:
        winner = Winner.RIGHT
    else:
        winner = Winner.TIE
    return ComparisonPrediction(winner=winner, score=score)


def export_comparison_model(model: ComparisonModel, path: str | Path) -> None:
    """Write a fitted comparison model to JSON, tagged by model kind."""
    payload = {
        "model_kind": "comparison",
        "k": model.k,
        "gamma": model.gamma,
        "m": model.m,
        "n": model.n,
        "U": model.U.tolist(),
        "V": model.V.tolist(),
        "step_size": model.step_size,
        "epochs": model.epochs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def import_comparison_model(path: str | Path) -> ComparisonModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("model_kind") != "comparison":
        raise ValueError(
            f"expected a comparison model, got {payload.get('model_kind')!r}"
        )
    U = np.array(payload["U"], dtype=np.float64).reshape(payload["m"], payload["k"])
    V = np.array(payload["V"], dtype=np.float64).reshape(payload["n"], payload["k"])
    return ComparisonModel(
        U=U,
        V=V,
        k=int(payload["k"]),
        gamma=float(payload["gamma"]),
        step_size=float(payload["step_size"]),
        epochs=int(payload["epochs"]),
    )
