"""Training loop for the GCN classifier: class-weighted cross-entropy,
Adam with bias correction, seeded mini-batching over graphs, and per-epoch
node-level validation metrics.

All randomness (shuffling, dropout masks) is derived from (seed, epoch,
batch), so resuming from a checkpoint continues bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import GcnModel, GraphSample, concat_samples, forward, predict


class TrainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None) -> Tensor:
    """Mean class-weighted softmax cross-entropy over labeled nodes.

    Nodes with label -1 are ignored; rejects batches without labels.
    """
    labels = np.asarray(labels)
    labeled = labels >= 0
    n_labeled = int(labeled.sum())
    if n_labeled == 0:
        raise TrainError("no labeled nodes in batch")
    n, c = logits.shape
    if class_weights is None:
        class_weights = np.ones(c)
    w = np.zeros(n, dtype=logits.value.dtype)
    w[labeled] = np.asarray(class_weights, dtype=logits.value.dtype)[labels[labeled]]

    shift = logits.value.max(axis=1, keepdims=True)  # detached; cancels exactly
    z = logits - shift
    lse = ad.log(ad.tsum(ad.exp(z), axis=1, keepdims=True))
    logp = z - lse
    onehot = np.zeros((n, c), dtype=logits.value.dtype)
    onehot[labeled, labels[labeled]] = 1.0
    picked = ad.tsum(logp * onehot, axis=1)
    return ad.tsum(picked * w) * (-1.0 / n_labeled)


def loss_and_gradients(
    model: GcnModel,
    sample: GraphSample,
    class_weights: np.ndarray | None = None,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """One forward/backward pass; dropout mask fixed per call via the rng."""
    mode = "train" if dropout_rng is not None else "eval"
    logits = forward(model, sample, mode=mode, dropout_rng=dropout_rng)
    loss = cross_entropy(logits, sample.labels, class_weights)
    for _, p in model.parameters():
        p.grad = None
    loss.backward()
    grads = {}
    for name, p in model.parameters():
        grads[name] = p.grad if p.grad is not None else np.zeros_like(p.value)
    return float(loss.value), grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: list[tuple[str, Tensor]],
    grads: dict[str, np.ndarray],
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard Adam update with bias correction, in place."""
    state.step += 1
    t = state.step
    for name, p in params:
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# node-level metrics for validation
# ---------------------------------------------------------------------------

def node_confusion(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    labeled = truth >= 0
    p, t = pred[labeled], truth[labeled]
    tp = int(np.sum((p == 1) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    return tp, tn, fp, fn


def _safe_pct(num: float, den: float) -> float | None:
    return 100.0 * num / den if den else None


def node_metrics(pred: np.ndarray, truth: np.ndarray) -> dict[str, float | None]:
    tp, tn, fp, fn = node_confusion(pred, truth)
    f1_den = 2 * tp + fp + fn
    return {
        "P_d": _safe_pct(tp, tp + fn),
        "P_f": _safe_pct(fp, tp + fp),
        "P_acc": _safe_pct(tp + tn, tp + tn + fp + fn),
        "F1": 2.0 * tp / f1_den if f1_den else None,
    }


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_params: dict[str, np.ndarray]
    opt_state: AdamState
    end_epoch: int


def class_weights_from(samples: list[GraphSample], n_classes: int = 2) -> np.ndarray:
    """Inverse-frequency weights, normalized so balanced data gives ones."""
    counts = np.zeros(n_classes)
    for s in samples:
        lab = s.labels[s.labels >= 0]
        counts += np.bincount(lab, minlength=n_classes)[:n_classes]
    total = counts.sum()
    if total == 0 or np.any(counts == 0):
        return np.ones(n_classes)
    return total / (n_classes * counts)


def train(
    model: GcnModel,
    train_set: list[GraphSample],
    val_set: list[GraphSample],
    config: TrainConfig,
    class_weights: np.ndarray | None = None,
    opt_state: AdamState | None = None,
    start_epoch: int = 0,
) -> TrainResult:
    """Train in mini-batches of graphs; retains the best-validation epoch.

    Batches concatenate graphs into one disconnected graph. Validation is
    scored at node level after each epoch; the parameter snapshot with the
    best F1 is kept (ties keep the earlier epoch).
    """
    if not train_set:
        raise TrainError("empty training set")
    if class_weights is None:
        class_weights = class_weights_from(train_set, model.n_classes)
    state = opt_state if opt_state is not None else AdamState()

    history: list[dict] = []
    best_f1 = -1.0
    best_epoch = -1
    best_params = {name: p.value.copy() for name, p in model.parameters()}

    n = len(train_set)
    for epoch in range(start_epoch, start_epoch + config.epochs):
        order = np.random.default_rng([config.seed, epoch, 11]).permutation(n)
        losses = []
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            batch = [train_set[i] for i in order[lo:lo + config.batch_size]]
            sample = concat_samples(batch)
            rng = np.random.default_rng([config.seed, epoch, bi, 7]) if model.dropout > 0 else None
            loss, grads = loss_and_gradients(model, sample, class_weights, dropout_rng=rng)
            adam_step(state, model.parameters(), grads, lr=config.learning_rate)
            for name, p in model.parameters():
                if not np.all(np.isfinite(p.value)):
                    raise TrainError(f"non-finite parameter {name} after step {state.step}")
            losses.append(loss)

        val_pred = []
        val_truth = []
        for s in val_set:
            val_pred.append(predict(model, s))
            val_truth.append(s.labels)
        if val_set:
            metrics = node_metrics(np.concatenate(val_pred), np.concatenate(val_truth))
        else:
            metrics = {"P_d": None, "P_f": None, "P_acc": None, "F1": None}
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), **metrics}
        history.append(row)

        f1 = metrics["F1"] if metrics["F1"] is not None else -1.0
        if f1 > best_f1:
            best_f1 = f1
            best_epoch = epoch
            best_params = {name: p.value.copy() for name, p in model.parameters()}

    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_params=best_params,
        opt_state=state,
        end_epoch=start_epoch + config.epochs,
    )


def apply_params(model: GcnModel, params: dict[str, np.ndarray]) -> None:
    for name, p in model.parameters():
        p.value = params[name].copy()
