"""
Weighted cross-entropy losses and inverse-frequency class weighting
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, ShapeError
from tensor_nn import Tensor, softmax

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class ClassWeights:
    """
    Positive per-class loss multipliers in dataset label-index order
    """

    weights: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    def per_sample(self, targets: np.ndarray, dtype: object) -> np.ndarray:
        """
        Weight of each sample's target class

        Args:
            targets (np.ndarray): Class indices
            dtype (object): Output dtype

        Returns:
            np.ndarray: One weight per sample
        """
        return self.weights.astype(dtype)[np.asarray(targets, dtype=np.int64)]

    def to_list(self) -> list:
        return [float(w) for w in self.weights]


def inverse_frequency_weights(class_counts: Sequence[int]) -> ClassWeights:
    """
    Balanced weights w_c = N / (C · n_c), so the sample-weighted mean weight is 1

    Args:
        class_counts (Sequence[int]): Positive count per class

    Raises:
        ConfigError: Fewer than two classes or a class with no samples

    Returns:
        ClassWeights: One weight per class
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.shape[0] < 2:
        raise ConfigError(f"inverse-frequency weighting needs at least 2 classes, got {counts.shape}")

    empty = [i for i, n in enumerate(counts) if n <= 0]
    if empty:
        raise ConfigError(
            f"classes {empty} have no samples; drop or merge them before weighting the loss"
        )

    total = counts.sum()
    return ClassWeights(total / (counts.shape[0] * counts))


def _check_batch(values: Tensor, targets: np.ndarray) -> None:
    if values.shape[0] != targets.shape[0]:
        raise ShapeError("batch", values.shape[0], targets.shape[0], "loss")


def weighted_bce(
    prob: Tensor, target: np.ndarray, weights: Optional[ClassWeights]
) -> Tuple[float, Tensor]:
    """
    Class-weighted binary cross-entropy
        loss = -(1/B) Σ w_y [y ln p + (1 - y) ln(1 - p)], p clamped to [1e-7, 1 - 1e-7]

    Args:
        prob (Tensor): Predicted attack probability [B, 1]
        target (np.ndarray): Labels in {0, 1}
        weights (Optional[ClassWeights]): Two class weights; None means unweighted

    Returns:
        Tuple[float, Tensor]: Mean loss and its gradient w.r.t. prob
    """
    y = np.asarray(target).reshape(-1)
    _check_batch(prob, y)
    p = np.clip(prob.reshape(-1), PROB_CLAMP, 1 - PROB_CLAMP)
    y = y.astype(p.dtype)
    batch = p.shape[0]

    log_likelihood = y * np.log(p) + (1 - y) * np.log(1 - p)
    grad = -(y / p - (1 - y) / (1 - p))

    if weights is not None:
        if weights.num_classes != 2:
            raise ShapeError("classes", 2, weights.num_classes, "weighted_bce")
        w = weights.per_sample(y.astype(np.int64), p.dtype)
        log_likelihood = w * log_likelihood
        grad = w * grad

    loss = -float(np.mean(log_likelihood))
    return loss, (grad / batch).reshape(prob.shape)


def weighted_categorical_ce(
    logits: Tensor, target: np.ndarray, weights: Optional[ClassWeights]
) -> Tuple[float, Tensor]:
    """
    Softmax negative log-likelihood with each sample scaled by its class weight

    Args:
        logits (Tensor): Unnormalized class scores [B, C]
        target (np.ndarray): Class indices in [0, C)
        weights (Optional[ClassWeights]): One weight per class; None means unweighted

    Raises:
        ConfigError: Target outside [0, C) or fewer than two classes

    Returns:
        Tuple[float, Tensor]: Mean loss and gradient w_y (softmax - onehot) / B
    """
    y = np.asarray(target, dtype=np.int64).reshape(-1)
    _check_batch(logits, y)
    batch, classes = logits.shape
    if classes < 2:
        raise ConfigError(f"categorical cross-entropy needs at least 2 classes, got {classes}")

    bad = np.flatnonzero((y < 0) | (y >= classes))
    if bad.size:
        raise ConfigError(
            f"targets out of range [0, {classes}) at batch positions {bad[:10].tolist()}"
        )

    rows = np.arange(batch)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_prob = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    nll = -log_prob[rows, y]

    grad = softmax(logits)
    grad[rows, y] -= 1

    if weights is not None:
        if weights.num_classes != classes:
            raise ShapeError("classes", classes, weights.num_classes, "weighted_categorical_ce")
        w = weights.per_sample(y, logits.dtype)
        nll = w * nll
        grad = w[:, None] * grad

    return float(np.mean(nll)), grad / batch
