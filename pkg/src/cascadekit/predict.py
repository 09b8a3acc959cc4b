"""Baseline virality prediction and feature attribution.

A transparent stand-in for heavier model stacks: stratified splits, a
full-batch logistic model trained by gradient descent on standardized
features, exact rank-statistic metrics, permutation importance, and exact
Shapley attribution by coalition enumeration for small registries. The
feature matrices can also be exported for external tooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .features import FeatureMatrix

MAX_SHAPLEY_FEATURES = 15


@dataclass
class ModelArtifact:
    """Trained logistic model plus the standardization that produced it.

    weights/means/stds cover every registry column; constant columns are
    trained with weight 0 and a placeholder std of 1, and their names are
    listed in dropped.
    """

    feature_names: tuple[str, ...]
    weights: np.ndarray
    bias: float
    means: np.ndarray
    stds: np.ndarray
    dropped: tuple[str, ...]
    seed: int
    epochs: int
    learning_rate: float
    l2: float
    final_loss: float
    loss_curve: list[float] = field(repr=False, default_factory=list)


def stratified_split(labels: Sequence[bool], test_fraction: float,
                     seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(train_indices, test_indices), class-balanced and seed-deterministic.

    Each class contributes round(n_class * test_fraction) items to the test
    side (at least one training item per class is always retained), which
    keeps test class proportions within one item of the stratified ideal.
    """
    y = np.asarray(labels, dtype=bool)
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    if y.all() or not y.any():
        raise ValueError("both classes must be present")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for cls in (False, True):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        take = int(math.floor(len(idx) * test_fraction + 0.5))
        take = min(take, len(idx) - 1)
        test_parts.append(idx[:take])
        train_parts.append(idx[take:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return train, test


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_logistic(matrix: FeatureMatrix, epochs: int = 500,
                   learning_rate: float = 0.1, l2: float = 1e-2,
                   seed: int = 0) -> ModelArtifact:
    """Full-batch gradient descent on L2-regularized log-loss.

    Features are standardized internally from the training matrix; the
    artifact carries the transform so scoring works on raw features.
    Deterministic: weights start at zero and the data order is irrelevant
    to a full-batch gradient.
    """
    X = matrix.rows
    if matrix.labels is None:
        raise ValueError("training matrix must carry labels")
    y = matrix.labels.astype(np.float64)
    n, d = X.shape
    if n == 0 or d == 0:
        raise ValueError("degenerate training matrix")
    if y.min() == y.max():
        raise ValueError("both classes must be present")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    keep = stds > 0
    stds_safe = np.where(keep, stds, 1.0)
    Xs = (X - means) / stds_safe
    Xs[:, ~keep] = 0.0

    w = np.zeros(d)
    b = 0.0
    losses = []
    for _ in range(epochs):
        z = Xs @ w + b
        p = _sigmoid(z)
        # clamped log-loss plus the ridge term
        eps = 1e-12
        loss = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
        loss += 0.5 * l2 * float(w @ w)
        losses.append(float(loss))
        grad_w = Xs.T @ (p - y) / n + l2 * w
        grad_b = float(np.mean(p - y))
        w -= learning_rate * grad_w
        b -= learning_rate * grad_b
        w[~keep] = 0.0
    return ModelArtifact(
        feature_names=matrix.names,
        weights=w,
        bias=b,
        means=means,
        stds=stds_safe,
        dropped=tuple(name for name, k in zip(matrix.names, keep) if not k),
        seed=seed,
        epochs=epochs,
        learning_rate=learning_rate,
        l2=l2,
        final_loss=losses[-1] if losses else float("nan"),
        loss_curve=losses,
    )


def raw_scores(model: ModelArtifact, X: np.ndarray) -> np.ndarray:
    """Pre-sigmoid decision scores for raw (unstandardized) feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Xs = (X - model.means) / model.stds
    return Xs @ model.weights + model.bias


def predict_proba(model: ModelArtifact, X: np.ndarray) -> np.ndarray:
    return _sigmoid(raw_scores(model, X))


def predict_label(model: ModelArtifact, X: np.ndarray) -> np.ndarray:
    return raw_scores(model, X) >= 0.0


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a random positive outscores a random negative (ties half).

    Computed with the Mann-Whitney rank statistic using midranks for ties,
    which agrees exactly with brute-force pairwise comparison.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present for AUC")
    order = np.argsort(s, kind="mergesort")
    sorted_scores = s[order]
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank: ranks i+1 .. j+1 averaged; sums of halves stay exact
        ranks[order[i:j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    pos_rank_sum = float(ranks[y].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(pred: Sequence[bool], labels: Sequence[bool]) -> float:
    p = np.asarray(pred, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if len(p) != len(y) or len(y) == 0:
        raise ValueError("prediction/label length mismatch or empty")
    return float(np.mean(p == y))


def _f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(pred: Sequence[bool], labels: Sequence[bool]) -> float:
    """Unweighted mean of the positive-class and negative-class F1 scores."""
    p = np.asarray(pred, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if len(p) != len(y) or len(y) == 0:
        raise ValueError("prediction/label length mismatch or empty")
    return (_f1(p, y) + _f1(~p, ~y)) / 2.0


def _metric_fn(metric: str | Callable) -> Callable:
    if callable(metric):
        return metric
    if metric == "auc":
        return lambda model, X, y: roc_auc(raw_scores(model, X), y)
    if metric == "accuracy":
        return lambda model, X, y: accuracy(predict_label(model, X), y)
    if metric == "macro_f1":
        return lambda model, X, y: macro_f1(predict_label(model, X), y)
    raise ValueError(f"unknown metric {metric!r}")


def permutation_importance(model: ModelArtifact, X: np.ndarray,
                           labels: Sequence[bool], metric: str | Callable = "auc",
                           repeats: int = 5, seed: int = 0) -> dict[str, float]:
    """Mean metric drop per feature over seeded within-column shuffles.

    Each feature gets its own deterministic generator derived from
    (seed, feature index), so the result is independent of evaluation
    order and bit-reproducible.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    fn = _metric_fn(metric)
    base = fn(model, X, y)
    out: dict[str, float] = {}
    for j, name in enumerate(model.feature_names):
        rng = np.random.default_rng(np.random.SeedSequence([seed, j]))
        drops = []
        for _ in range(repeats):
            shuffled = X.copy()
            rng.shuffle(shuffled[:, j])
            drops.append(base - fn(model, shuffled, y))
        out[name] = float(np.mean(drops))
    return out


def exact_shapley(model: ModelArtifact, instance: np.ndarray,
                  background_means: np.ndarray | None = None,
                  max_features: int = MAX_SHAPLEY_FEATURES) -> dict[str, float]:
    """Exact Shapley attribution of the raw score by coalition enumeration.

    A coalition S is valued as the model's raw score on an input whose
    in-S features come from the instance and whose out-of-S features are
    replaced by the background means (default: the training means). All
    2^d coalitions are enumerated, so d is capped at max_features.
    """
    d = len(model.feature_names)
    if d > max_features:
        raise ValueError(f"{d} features exceed the exact-enumeration cap {max_features}")
    x = np.asarray(instance, dtype=np.float64).reshape(d)
    bg = model.means if background_means is None else \
        np.asarray(background_means, dtype=np.float64).reshape(d)

    # rows of masks are all subsets; column j is bit j of the subset index
    subsets = np.arange(1 << d, dtype=np.uint32)
    masks = ((subsets[:, None] >> np.arange(d, dtype=np.uint32)) & 1).astype(np.float64)
    inputs = bg + masks * (x - bg)
    values = raw_scores(model, inputs)
    popcount = masks.sum(axis=1).astype(np.int64)

    fact = [math.factorial(k) for k in range(d + 1)]
    # weight by |S|! (d-|S|-1)! / d! for subsets S not containing the player
    weight_by_size = np.array([fact[s] * fact[d - s - 1] / fact[d] for s in range(d)])
    out: dict[str, float] = {}
    for j, name in enumerate(model.feature_names):
        without = np.flatnonzero(((subsets >> j) & 1) == 0)
        with_j = without + (1 << j)
        gains = values[with_j] - values[without]
        out[name] = float(np.sum(weight_by_size[popcount[without]] * gains))
    return out


@dataclass(slots=True)
class ExperimentResult:
    level: str
    mode: str
    n_train: int
    n_test: int
    accuracy: float
    macro_f1: float
    auc: float
    attribution_method: str
    top_attributions: list[tuple[str, float]]


def evaluate_model(model: ModelArtifact, X: np.ndarray,
                   y: Sequence[bool]) -> tuple[float, float, float]:
    """(accuracy, macro_f1, auc) on raw feature rows."""
    scores = raw_scores(model, X)
    pred = scores >= 0.0
    return accuracy(pred, y), macro_f1(pred, y), roc_auc(scores, y)


def attribution_table(model: ModelArtifact, X_test: np.ndarray,
                      y_test: Sequence[bool], seed: int = 0,
                      shapley_sample: int = 25) -> tuple[str, list[tuple[str, float]]]:
    """Per-feature influence scores, largest first.

    Small registries get mean absolute exact-Shapley attributions over a
    sample of test rows; larger ones fall back to permutation importance.
    """
    d = len(model.feature_names)
    if d <= MAX_SHAPLEY_FEATURES:
        take = min(shapley_sample, X_test.shape[0])
        totals = np.zeros(d)
        for i in range(take):
            phi = exact_shapley(model, X_test[i])
            totals += np.abs([phi[name] for name in model.feature_names])
        scores = dict(zip(model.feature_names, totals / max(take, 1)))
        method = "mean_abs_shapley"
    else:
        scores = permutation_importance(model, X_test, y_test, seed=seed)
        method = "permutation_importance"
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return method, ranked


def run_experiment_grid(cells: dict[tuple[str, str], FeatureMatrix],
                        test_fraction: float = 0.2, seed: int = 0,
                        epochs: int = 500, learning_rate: float = 0.1,
                        l2: float = 1e-2) -> list[ExperimentResult]:
    """Train/evaluate one model per (level, mode) cell.

    cells maps (level, mode) to a labeled FeatureMatrix. Results come back
    in the input's key order with metrics and a top-5 attribution table.
    """
    results = []
    for (level, mode), matrix in cells.items():
        if matrix is None:
            raise ValueError(f"missing matrix for cell ({level}, {mode})")
        if matrix.labels is None:
            raise ValueError(f"cell ({level}, {mode}) is unlabeled")
        train_idx, test_idx = stratified_split(matrix.labels, test_fraction, seed)
        train = FeatureMatrix(names=matrix.names,
                              ids=[matrix.ids[i] for i in train_idx],
                              rows=matrix.rows[train_idx],
                              labels=matrix.labels[train_idx])
        model = train_logistic(train, epochs=epochs, learning_rate=learning_rate,
                               l2=l2, seed=seed)
        X_test = matrix.rows[test_idx]
        y_test = matrix.labels[test_idx]
        acc, f1, auc = evaluate_model(model, X_test, y_test)
        method, ranked = attribution_table(model, X_test, y_test, seed=seed)
        results.append(ExperimentResult(
            level=level, mode=mode,
            n_train=len(train_idx), n_test=len(test_idx),
            accuracy=acc, macro_f1=f1, auc=auc,
            attribution_method=method,
            top_attributions=ranked[:5],
        ))
    return results
