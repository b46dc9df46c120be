"""Minimal numpy classifiers: linear softmax and a one-hidden-layer MLP.

Per-sample cross-entropy is computed with the log-sum-exp trick; SGD steps
take per-sample weights so pruning policies can rescale kept samples.
"""

from __future__ import annotations

import numpy as np

from .validation import check_positive_int

LOSS_DIVERGENCE_CAP = 1e6


class DivergenceError(RuntimeError):
    """Raised when a loss or gradient leaves the finite, bounded regime."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample CE loss, stable for logits of any magnitude."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ValueError("logits must be 2-D")
    if labels.shape != (logits.shape[0],):
        raise ValueError("labels must align with logits rows")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("label out of range for logits width")
    return -log_softmax(logits)[np.arange(labels.size), labels]


class LinearSoftmax:
    """Softmax regression: logits = X @ W + b."""

    def __init__(self, dim: int, num_classes: int, rng: np.random.Generator):
        self.dim = check_positive_int(dim, "dim")
        self.num_classes = check_positive_int(num_classes, "num_classes")
        self.W = glorot_uniform(rng, dim, num_classes)
        self.b = np.zeros(num_classes)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W + self.b

    def loss_and_grads(self, X, y, sample_weights):
        """Per-sample losses plus gradients of (1/B) * sum_i w_i * loss_i."""
        B = X.shape[0]
        logits = self.logits(X)
        losses = cross_entropy(logits, y)
        dlogits = softmax(logits)
        dlogits[np.arange(B), y] -= 1.0
        dlogits *= sample_weights[:, None] / B
        grads = {"W": X.T @ dlogits, "b": dlogits.sum(axis=0)}
        return losses, grads

    def step(self, grads: dict, lr: float) -> None:
        _check_grads_finite(grads)
        self.W -= lr * grads["W"]
        self.b -= lr * grads["b"]


class OneHiddenMLP:
    """ReLU MLP with one hidden layer."""

    def __init__(self, dim: int, hidden: int, num_classes: int, rng: np.random.Generator):
        self.dim = check_positive_int(dim, "dim")
        self.hidden = check_positive_int(hidden, "hidden")
        self.num_classes = check_positive_int(num_classes, "num_classes")
        self.W1 = glorot_uniform(rng, dim, hidden)
        self.b1 = np.zeros(hidden)
        self.W2 = glorot_uniform(rng, hidden, num_classes)
        self.b2 = np.zeros(num_classes)

    def logits(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.W1 + self.b1, 0.0) @ self.W2 + self.b2

    def loss_and_grads(self, X, y, sample_weights):
        B = X.shape[0]
        pre = X @ self.W1 + self.b1
        h = np.maximum(pre, 0.0)
        logits = h @ self.W2 + self.b2
        losses = cross_entropy(logits, y)
        dlogits = softmax(logits)
        dlogits[np.arange(B), y] -= 1.0
        dlogits *= sample_weights[:, None] / B
        dh = dlogits @ self.W2.T
        dpre = dh * (pre > 0.0)
        grads = {
            "W1": X.T @ dpre,
            "b1": dpre.sum(axis=0),
            "W2": h.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        return losses, grads

    def step(self, grads: dict, lr: float) -> None:
        _check_grads_finite(grads)
        self.W1 -= lr * grads["W1"]
        self.b1 -= lr * grads["b1"]
        self.W2 -= lr * grads["W2"]
        self.b2 -= lr * grads["b2"]


def build_model(dim: int, num_classes: int, hidden_width: int | None, rng: np.random.Generator):
    if hidden_width is None:
        return LinearSoftmax(dim, num_classes, rng)
    return OneHiddenMLP(dim, hidden_width, num_classes, rng)


def per_sample_losses(model, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluation-mode CE losses, no parameter update."""
    return cross_entropy(model.logits(X), y)


def predict_labels(model, X: np.ndarray) -> np.ndarray:
    # np.argmax breaks ties toward the lowest class index.
    return np.argmax(model.logits(X), axis=1)


def evaluate_accuracy(model, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("cannot evaluate accuracy on an empty split")
    return float(np.mean(predict_labels(model, X) == y))


def check_losses(losses: np.ndarray, epoch: int | None = None) -> None:
    """Divergence guard: abort on non-finite or absurdly large losses."""
    if not np.all(np.isfinite(losses)):
        raise DivergenceError("non-finite loss encountered", epoch=epoch)
    if losses.size and float(losses.max()) > LOSS_DIVERGENCE_CAP:
        raise DivergenceError(
            f"loss {float(losses.max()):.3e} exceeds cap {LOSS_DIVERGENCE_CAP:.0e}", epoch=epoch
        )


def _check_grads_finite(grads: dict) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name}")


def sgd_epoch(model, X, y, weights, ids, batch_size, lr, rng, epoch=None):
    """One pass over ``ids`` in shuffled order; returns per-visit losses.

    The returned array is aligned with the full dataset (NaN for ids not
    visited). Each visited sample contributes the loss observed at its single
    visit, before that batch's update.
    """
    n = X.shape[0]
    visit_losses = np.full(n, np.nan)
    order = rng.permutation(ids)
    for start in range(0, order.size, batch_size):
        batch = order[start : start + batch_size]
        losses, grads = model.loss_and_grads(X[batch], y[batch], weights[batch])
        check_losses(losses, epoch=epoch)
        visit_losses[batch] = losses
        model.step(grads, lr)
    return visit_losses
