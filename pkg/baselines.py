"""
Reference classifiers for the comparison rows: logistic regression and K-nearest-neighbors
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigError, DataError, ShapeError
from logger import Logger
from losses import ClassWeights, weighted_bce, weighted_categorical_ce
from metrics_report import MetricsReport, binary_metrics, confusion_matrix, multiclass_metrics
from models import Head
from tensor_nn import sigmoid
from unsw_dataset import EncodedDataset, class_names

KNN_BLOCK_SCALARS = 1 << 24


def _flatten(features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    return x.reshape(x.shape[0], int(np.prod(x.shape[1:])))


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LogRegModel:
    """
    Linear classifier: weights [1, D] with a sigmoid (binary) or [C, D] with a softmax
    """

    weights: np.ndarray
    bias: np.ndarray
    head: Head
    trained: bool = False
    losses: List[float] = field(default_factory=list)

    @property
    def num_features(self) -> int:
        return int(self.weights.shape[1])

    @staticmethod
    def zeros(num_features: int, head: Head) -> "LogRegModel":
        width = Head(head).width
        return LogRegModel(np.zeros((width, num_features)), np.zeros(width), Head(head))


def logreg_loss_and_grad(
    model: LogRegModel,
    features: np.ndarray,
    labels: np.ndarray,
    weights: Optional[ClassWeights] = None,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Cross-entropy of the linear model and its gradients

    Args:
        model (LogRegModel): Current parameters
        features (np.ndarray): Inputs [B, ...], flattened to [B, D]
        labels (np.ndarray): Targets
        weights (Optional[ClassWeights]): Class weights; None means unweighted

    Returns:
        Tuple[float, np.ndarray, np.ndarray]: Loss, weight gradient and bias gradient
    """
    x = _flatten(features)
    if x.shape[1] != model.num_features:
        raise ShapeError("features", model.num_features, x.shape[1], "logreg")

    logits = x @ model.weights.T + model.bias
    if model.head == Head.BINARY:
        prob = sigmoid(logits)
        loss, grad_prob = weighted_bce(prob, labels, weights)
        grad_logits = grad_prob * prob * (1.0 - prob)
    else:
        loss, grad_logits = weighted_categorical_ce(logits, labels, weights)

    return loss, grad_logits.T @ x, grad_logits.sum(axis=0)


def logreg_fit(
    features: np.ndarray,
    labels: np.ndarray,
    head: Head = Head.BINARY,
    epochs: int = 20,
    lr: float = 0.1,
    batch_size: int = 256,
    seed: int = 0,
    weights: Optional[ClassWeights] = None,
) -> LogRegModel:
    """
    Mini-batch gradient descent from zero weights

    Args:
        features (np.ndarray): Training inputs [N, ...]
        labels (np.ndarray): Training labels
        head (Head, optional): Binary sigmoid or multinomial softmax. Defaults to binary
        epochs (int, optional): Passes over the data. Defaults to 20
        lr (float, optional): Step size. Defaults to 0.1
        batch_size (int, optional): Mini-batch size. Defaults to 256
        seed (int, optional): Shuffling seed. Defaults to 0
        weights (Optional[ClassWeights]): Class weights for the loss

    Raises:
        ConfigError: Invalid schedule
        DataError: Empty input or non-finite parameters

    Returns:
        LogRegModel: Trained model with its per-epoch mean loss
    """
    if epochs < 1 or batch_size < 1 or not lr > 0:
        raise ConfigError(
            f"logreg needs epochs >= 1, batch_size >= 1 and lr > 0 "
            f"(got {epochs}, {batch_size}, {lr})"
        )

    x = _flatten(features)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise DataError("cannot fit logistic regression on zero records")

    model = LogRegModel.zeros(x.shape[1], head)
    rng = np.random.default_rng(seed)
    n = x.shape[0]

    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grad_w, grad_b = logreg_loss_and_grad(model, x[idx], y[idx], weights)
            model.weights -= lr * grad_w
            model.bias -= lr * grad_b
            total += loss * idx.size
        model.losses.append(total / n)

    if not (np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))):
        raise DataError("logistic regression diverged to non-finite parameters")

    model.trained = True
    return model


def logreg_predict_proba(model: LogRegModel, features: np.ndarray) -> np.ndarray:
    logits = _flatten(features) @ model.weights.T + model.bias
    if model.head == Head.BINARY:
        return sigmoid(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def logreg_predict(model: LogRegModel, features: np.ndarray) -> np.ndarray:
    """
    Labels: probability >= 0.5 for binary, argmax for multiclass

    Args:
        model (LogRegModel): Trained model
        features (np.ndarray): Inputs [N, ...]

    Raises:
        ConfigError: Model was never fitted

    Returns:
        np.ndarray: Labels
    """
    if not model.trained:
        raise ConfigError("logistic regression model is not trained")
    proba = logreg_predict_proba(model, features)
    if model.head == Head.BINARY:
        return (proba[:, 0] >= 0.5).astype(np.int64)
    return np.argmax(proba, axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# K-nearest-neighbors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnIndex:
    """
    Stored training points for exact Euclidean search
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    num_classes: int

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


def knn_build(
    features: np.ndarray, labels: np.ndarray, k: int = 5, num_classes: Optional[int] = None
) -> KnnIndex:
    """
    Store training points

    Args:
        features (np.ndarray): Training inputs [N, ...]
        labels (np.ndarray): Training labels
        k (int, optional): Neighbors per vote. Defaults to 5
        num_classes (Optional[int]): Label space size; inferred from labels when omitted

    Raises:
        DataError: Empty index
        ConfigError: k outside [1, N]

    Returns:
        KnnIndex: Immutable index
    """
    x = _flatten(features).copy() if np.asarray(features).size else np.zeros((0, 0))
    y = np.array(labels, dtype=np.int64).reshape(-1)
    if x.shape[0] == 0:
        raise DataError("cannot build a KNN index from zero records")
    if y.shape[0] != x.shape[0]:
        raise ShapeError("records", x.shape[0], y.shape[0], "knn_build")
    if not 1 <= k <= x.shape[0]:
        raise ConfigError(f"k must be in [1, {x.shape[0]}], got {k}")

    classes = int(num_classes) if num_classes is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= classes:
        raise DataError(f"KNN labels must be in [0, {classes})")
    x.setflags(write=False)
    y.setflags(write=False)
    return KnnIndex(x, y, k, classes)


def _knn_block(
    index: KnnIndex, queries: np.ndarray, train: np.ndarray, train_sq: np.ndarray
) -> np.ndarray:
    # Inputs are centered on the training mean; expanded squares can still round below zero
    dist = (
        np.einsum("ij,ij->i", queries, queries)[:, None]
        - 2.0 * queries @ train.T
        + train_sq[None, :]
    )
    np.maximum(dist, 0.0, out=dist)
    k = index.k
    if k < index.size:
        nearest = np.argpartition(dist, k - 1, axis=1)[:, :k]
    else:
        nearest = np.broadcast_to(np.arange(index.size), (queries.shape[0], index.size))

    votes = np.zeros((queries.shape[0], index.num_classes), dtype=np.int64)
    rows = np.repeat(np.arange(queries.shape[0]), k)
    np.add.at(votes, (rows, index.labels[nearest].reshape(-1)), 1)
    # argmax returns the first maximum: ties go to the smallest class index
    return np.argmax(votes, axis=1).astype(np.int64)


def knn_predict(index: Optional[KnnIndex], features: np.ndarray, threads: int = 1) -> np.ndarray:
    """
    Majority vote among the k nearest stored points

    Args:
        index (Optional[KnnIndex]): Built index
        features (np.ndarray): Queries [M, ...]
        threads (int, optional): Parallel query blocks. Defaults to 1

    Raises:
        DataError: Missing or empty index
        ShapeError: Query width differs from the index

    Returns:
        np.ndarray: Labels in query order
    """
    if index is None or index.size == 0:
        raise DataError("KNN index is empty")
    queries = _flatten(features)
    if queries.shape[1] != index.features.shape[1]:
        raise ShapeError("features", index.features.shape[1], queries.shape[1], "knn_predict")

    center = index.features.mean(axis=0)
    train = index.features - center
    queries = queries - center
    train_sq = np.einsum("ij,ij->i", train, train)
    block = max(1, KNN_BLOCK_SCALARS // index.size)
    blocks = [queries[s : s + block] for s in range(0, queries.shape[0], block)]
    if not blocks:
        return np.zeros(0, dtype=np.int64)

    if threads <= 1 or len(blocks) == 1:
        parts = [_knn_block(index, b, train, train_sq) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _knn_block(index, b, train, train_sq), blocks))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Comparison rows
# ---------------------------------------------------------------------------


def _report(head: Head, actual: np.ndarray, predicted: np.ndarray, name: str) -> MetricsReport:
    cm = confusion_matrix(actual, predicted, class_names(head))
    return binary_metrics(cm, name) if head == Head.BINARY else multiclass_metrics(cm, name)


def compare_baselines(
    train: EncodedDataset,
    test: EncodedDataset,
    head: Head,
    knn_k: int = 5,
    logreg_epochs: int = 20,
    seed: int = 0,
    threads: int = 1,
    weights: Optional[ClassWeights] = None,
) -> List[MetricsReport]:
    """
    Fit, time and score both baselines on the same split

    Args:
        train (EncodedDataset): Training split
        test (EncodedDataset): Evaluation split
        head (Head): Label view
        knn_k (int, optional): KNN neighbors. Defaults to 5
        logreg_epochs (int, optional): Logistic regression epochs. Defaults to 20
        seed (int, optional): Shuffling seed. Defaults to 0
        threads (int, optional): KNN query workers. Defaults to 1
        weights (Optional[ClassWeights]): Loss weights for logistic regression

    Returns:
        List[MetricsReport]: Logistic Regression then KNN rows
    """
    logger = Logger("Baseline")
    head = Head(head)
    y_train, y_test = train.labels(head), test.labels(head)
    reports = []

    started = time.perf_counter()
    logreg = logreg_fit(train.features, y_train, head, logreg_epochs, seed=seed, weights=weights)
    train_s = time.perf_counter() - started
    started = time.perf_counter()
    predicted = logreg_predict(logreg, test.features)
    predict_s = time.perf_counter() - started
    reports.append(
        _report(head, y_test, predicted, "Logistic Regression").with_timing(train_s, predict_s)
    )
    logger.log_info(f"Logistic regression: accuracy {reports[-1].accuracy:.4f}")

    started = time.perf_counter()
    index = knn_build(train.features, y_train, knn_k, head.width if head != Head.BINARY else 2)
    train_s = time.perf_counter() - started
    started = time.perf_counter()
    predicted = knn_predict(index, test.features, threads)
    predict_s = time.perf_counter() - started
    reports.append(_report(head, y_test, predicted, "KNN").with_timing(train_s, predict_s))
    logger.log_info(f"KNN (k={knn_k}): accuracy {reports[-1].accuracy:.4f}")

    return reports
