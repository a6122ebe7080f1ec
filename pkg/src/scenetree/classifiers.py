"""Trainable probabilistic classifiers used at taxonomy nodes.

Two implementations ship here: a multinomial softmax model trained by seeded
mini-batch gradient descent, and a k-nearest-neighbours voter. Anything with
``class_ids``, ``predict_proba`` and ``predict_proba_batch`` can serve as a
node classifier, which is the extension point for plugging in other model
families.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ClassifierError(ValueError):
    """Invalid classifier input (dimensions, labels, configuration)."""


class TrainingDiverged(ClassifierError):
    """Training encountered a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings; defaults follow the evaluation protocol
    (10 epochs, batches of 8)."""

    epochs: int = 10
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4
    batch_size: int = 8
    seed: int = 42

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ClassifierError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be > 0")
        if self.l2_penalty < 0:
            raise ClassifierError("l2_penalty must be >= 0")
        if self.batch_size < 1:
            raise ClassifierError("batch_size must be >= 1")


def _as_feature_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ClassifierError("features must be a non-empty 2-D array")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("non-finite value in features")
    return X


def _check_vector(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise ClassifierError(f"expected feature vector of dimension {dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ClassifierError("non-finite value in feature vector")
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grads(
    weights: np.ndarray,
    bias: np.ndarray,
    X: np.ndarray,
    y_idx: np.ndarray,
    l2_penalty: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2/2)*||W||^2 with analytic gradients."""
    n = X.shape[0]
    logits = X @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(n), y_idx].mean()
    loss += 0.5 * l2_penalty * float((weights * weights).sum())

    probs = np.exp(log_probs)
    delta = probs
    delta[np.arange(n), y_idx] -= 1.0
    delta /= n
    grad_w = delta.T @ X + l2_penalty * weights
    grad_b = delta.sum(axis=0)
    return float(loss), grad_w, grad_b


@dataclass(eq=False)
class SoftmaxClassifier:
    """Linear softmax model over a fixed, ordered set of class ids."""

    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)
    class_ids: tuple[str, ...]
    epoch_losses: list[float] | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def predict_proba(self, x) -> np.ndarray:
        x = _check_vector(x, self.dimension)
        return softmax(x @ self.weights.T + self.bias)

    def predict_proba_batch(self, X) -> np.ndarray:
        X = _as_feature_matrix(X)
        if X.shape[1] != self.dimension:
            raise ClassifierError(
                f"expected dimension {self.dimension}, got {X.shape[1]}"
            )
        return softmax(X @ self.weights.T + self.bias)


def train_softmax(
    features,
    labels: Sequence[str],
    cfg: TrainConfig,
    class_ids: Sequence[str] | None = None,
) -> SoftmaxClassifier:
    """Train a softmax classifier by seeded mini-batch gradient descent.

    ``class_ids`` fixes the output order (taxonomy children); when omitted it
    is taken from first occurrence in ``labels``. Weights start at a seeded
    uniform draw in [-0.01, 0.01], bias at zero. A single distinct class
    skips training entirely and yields a classifier that returns that class
    with probability 1. ``epoch_losses`` on the result records the
    full-dataset loss before training and after each epoch.
    """
    X = _as_feature_matrix(features)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ClassifierError(
            f"{X.shape[0]} feature rows but {len(labels)} labels"
        )
    if class_ids is None:
        class_ids = list(dict.fromkeys(labels))
    class_ids = tuple(class_ids)
    index = {c: i for i, c in enumerate(class_ids)}
    for lab in labels:
        if lab not in index:
            raise ClassifierError(f"label {lab!r} not among class ids")

    dim = X.shape[1]
    if len(class_ids) == 1:
        return SoftmaxClassifier(
            weights=np.zeros((1, dim)),
            bias=np.zeros(1),
            class_ids=class_ids,
            epoch_losses=[],
        )

    y_idx = np.array([index[lab] for lab in labels], dtype=np.intp)
    rng = np.random.default_rng(cfg.seed)
    weights = rng.uniform(-0.01, 0.01, size=(len(class_ids), dim))
    bias = np.zeros(len(class_ids))

    losses = [cross_entropy_loss_and_grads(weights, bias, X, y_idx, cfg.l2_penalty)[0]]
    n = X.shape[0]
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grad_w, grad_b = cross_entropy_loss_and_grads(
                weights, bias, X[batch], y_idx[batch], cfg.l2_penalty
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    "training diverged: non-finite loss, lower the learning rate"
                )
            weights -= cfg.learning_rate * grad_w
            bias -= cfg.learning_rate * grad_b
        losses.append(
            cross_entropy_loss_and_grads(weights, bias, X, y_idx, cfg.l2_penalty)[0]
        )
    if not np.isfinite(losses[-1]):
        raise TrainingDiverged("training diverged: non-finite loss")

    return SoftmaxClassifier(
        weights=weights, bias=bias, class_ids=class_ids, epoch_losses=losses
    )


def uniform_classifier(class_ids: Sequence[str], dimension: int) -> SoftmaxClassifier:
    """Zero-weight softmax: outputs the uniform distribution for any input."""
    k = len(class_ids)
    return SoftmaxClassifier(
        weights=np.zeros((k, dimension)),
        bias=np.zeros(k),
        class_ids=tuple(class_ids),
        epoch_losses=[],
    )


@dataclass(eq=False)
class KnnClassifier:
    """k-nearest-neighbours vote over stored samples (Euclidean distance).

    Distance ties at the k-th slot go to the lower stored-sample index, so
    predictions are deterministic up to that documented rule.
    """

    features: np.ndarray  # (N, D)
    label_idx: np.ndarray  # (N,) indices into class_ids
    class_ids: tuple[str, ...]
    k: int

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def _vote(self, x: np.ndarray) -> np.ndarray:
        diff = self.features - x
        sq_dist = np.einsum("nd,nd->n", diff, diff)
        nearest = np.argsort(sq_dist, kind="stable")[: self.k]
        votes = np.bincount(self.label_idx[nearest], minlength=len(self.class_ids))
        return votes / float(self.k)

    def predict_proba(self, x) -> np.ndarray:
        return self._vote(_check_vector(x, self.dimension))

    def predict_proba_batch(self, X) -> np.ndarray:
        X = _as_feature_matrix(X)
        if X.shape[1] != self.dimension:
            raise ClassifierError(
                f"expected dimension {self.dimension}, got {X.shape[1]}"
            )
        return np.stack([self._vote(row) for row in X])


def train_knn(
    features,
    labels: Sequence[str],
    k: int,
    class_ids: Sequence[str] | None = None,
) -> KnnClassifier:
    """Store the training set for k-nearest-neighbour voting."""
    X = _as_feature_matrix(features)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ClassifierError(
            f"{X.shape[0]} feature rows but {len(labels)} labels"
        )
    if k < 1:
        raise ClassifierError("k must be >= 1")
    if k > X.shape[0]:
        raise ClassifierError(f"k={k} exceeds the {X.shape[0]} stored samples")
    if class_ids is None:
        class_ids = list(dict.fromkeys(labels))
    class_ids = tuple(class_ids)
    index = {c: i for i, c in enumerate(class_ids)}
    for lab in labels:
        if lab not in index:
            raise ClassifierError(f"label {lab!r} not among class ids")
    return KnnClassifier(
        features=X,
        label_idx=np.array([index[lab] for lab in labels], dtype=np.intp),
        class_ids=class_ids,
        k=k,
    )
