"""Feature ranking by recursive elimination under a linear SVM.

The SVM is trained by deterministic full-batch subgradient descent on the
L2-regularized hinge loss. Each elimination round drops the surviving
column with the smallest absolute weight (ties broken toward the lower
column index), which makes the ranking a permutation of the columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class SelectionError(ValueError):
    pass


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    losses: list[float] = field(default_factory=list)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision(X) >= 0).astype(np.int64)


def _hinge_loss(X, ysign, w, b, lam):
    margins = 1.0 - ysign * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(margins, 0.0).mean())


def train_linear_svm(
    X: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    epochs: int = 200,
    lr: float = 0.5,
    seed: int = 0,
) -> SvmModel:
    """Full-batch subgradient descent on the hinge loss.

    Deterministic: weights start at zero (the seed only exists for the
    module contract) and the step size follows a fixed schedule, halving
    whenever the recorded loss fails to decrease.
    """
    del seed
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise SelectionError("training data contains a single class")
    ysign = np.where(y == classes.max(), 1.0, -1.0)
    n, d = X.shape
    lam = 1.0 / (c * n)

    w = np.zeros(d)
    b = 0.0
    losses = [_hinge_loss(X, ysign, w, b, lam)]
    step = lr
    for _ in range(epochs):
        margins = 1.0 - ysign * (X @ w + b)
        viol = margins > 0
        gw = lam * w - (ysign[viol, None] * X[viol]).sum(axis=0) / n
        gb = -ysign[viol].sum() / n
        w = w - step * gw
        b = b - step * gb
        loss = _hinge_loss(X, ysign, w, b, lam)
        if loss > losses[-1]:
            step *= 0.5
        losses.append(loss)
    return SvmModel(weights=w, bias=b, losses=losses)


def f1_score(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


@dataclass
class Ranking:
    order: list[int]                      # column indices, best first
    snapshots: list[tuple[list[int], np.ndarray]]  # per-round (surviving, |w|)


def rfe_rank(X: np.ndarray, y: np.ndarray, c: float = 1.0, epochs: int = 200, lr: float = 0.5) -> Ranking:
    """Iteratively eliminate the weakest column, one per round."""
    X = np.asarray(X, dtype=np.float64)
    surviving = list(range(X.shape[1]))
    eliminated: list[int] = []
    snapshots = []
    while len(surviving) > 1:
        model = train_linear_svm(X[:, surviving], y, c=c, epochs=epochs, lr=lr)
        scores = np.abs(model.weights)
        snapshots.append((list(surviving), scores.copy()))
        weakest = int(np.lexsort((surviving, scores))[0])
        eliminated.append(surviving.pop(weakest))
    order = surviving + eliminated[::-1]
    return Ranking(order=order, snapshots=snapshots)


@dataclass
class F1Curve:
    scores: np.ndarray   # F1 at k = 1..D (index k-1)
    selected_k: int


def f1_curve(
    ranking: Ranking,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    c: float = 1.0,
    epochs: int = 200,
    lr: float = 0.5,
    tolerance: float = 0.005,
) -> F1Curve:
    """Retrain on each top-k prefix; select the smallest k whose validation
    F1 is within `tolerance` of the curve maximum."""
    X_train = np.asarray(X_train, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    d = X_train.shape[1]
    scores = np.zeros(d)
    for k in range(1, d + 1):
        cols = ranking.order[:k]
        model = train_linear_svm(X_train[:, cols], y_train, c=c, epochs=epochs, lr=lr)
        scores[k - 1] = f1_score(model.predict(X_val[:, cols]), y_val)
    best = scores.max()
    selected = int(np.argmax(scores >= best - tolerance)) + 1
    return F1Curve(scores=scores, selected_k=selected)


# ---------------------------------------------------------------------------
# interchange
# ---------------------------------------------------------------------------

def save_ranking(ranking: Ranking, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["rank", "column"])
        for i, col in enumerate(ranking.order):
            wr.writerow([i, col])


def load_ranking(path) -> list[int]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    order = [0] * len(rows)
    for r in rows:
        order[int(r["rank"])] = int(r["column"])
    return order


def save_f1_curve(curve: F1Curve, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["k", "f1"])
        for i, s in enumerate(curve.scores):
            wr.writerow([i + 1, repr(float(s))])
        wr.writerow(["selected", curve.selected_k])
