"""
Lightweight CNN-BiLSTM intrusion detection model
Assembles Conv1D → MaxPool → BiLSTM → Dense from a ModelConfig, trains it with
weighted losses and Adam, and runs batch inference
"""

import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from adam import AdamState, adam_step
from errors import ConfigError, DataError, ShapeError, TrainingAbortedError
from logger import Logger
from losses import ClassWeights, inverse_frequency_weights, weighted_bce, weighted_categorical_ce
from models import Head, ModelConfig, TrainConfig, TrainingHistory, Weighting
from tensor_nn import (
    ActivationKind,
    BiLstmLayer,
    BiLstmParams,
    Conv1DLayer,
    Conv1DParams,
    DEFAULT_DTYPE,
    DenseLayer,
    DenseParams,
    Layer,
    LstmParams,
    MaxPool1DLayer,
    Padding,
    Tensor,
    activation_backward,
    activation_forward,
    glorot_uniform,
    param_count,
    sigmoid,
    softmax,
)
from unsw_dataset import (
    EncodedDataset,
    EncoderState,
    class_distribution,
    class_names,
    split_random_stratified,
)

PREDICT_CHUNK = 1024


class CnnBiLstm:
    """
    Trainable layer stack: input [L, C] → Conv1D(F, K, ReLU) → MaxPool → BiLSTM(H) final
    state [2H] → Dense(head)
    """

    def __init__(self, config: ModelConfig, layers: Sequence[Layer[Any]]) -> None:
        self.config = config
        self.layers: List[Layer[Any]] = list(layers)

    @property
    def head(self) -> Head:
        return Head(self.config.head)

    @property
    def dtype(self) -> Any:
        return self.layers[0].params.weights.dtype

    def param_arrays(self) -> Dict[str, Tensor]:
        """
        Every parameter array keyed by qualified name, in manifest order

        Returns:
            Dict[str, Tensor]: Live parameter arrays
        """
        arrays: Dict[str, Tensor] = {}
        for layer in self.layers:
            arrays.update(layer.param_arrays())
        return arrays

    def param_count(self) -> int:
        return param_count(self.layers)

    def astype(self, dtype: Any) -> "CnnBiLstm":
        """
        Copy of the network with parameters cast to another dtype

        Args:
            dtype (Any): Target dtype, e.g. float64 for gradient checks

        Returns:
            CnnBiLstm: Converted copy
        """
        conv, pool, bilstm, dense = self.layers
        return CnnBiLstm(
            self.config,
            [
                Conv1DLayer(conv.params.astype(dtype)),
                MaxPool1DLayer(pool.pool),
                BiLstmLayer(bilstm.params.astype(dtype)),
                DenseLayer(dense.params.astype(dtype)),
            ],
        )

    def load_arrays(self, arrays: Dict[str, Tensor]) -> None:
        """
        Overwrite parameters from named arrays

        Args:
            arrays (Dict[str, Tensor]): Qualified name to array

        Raises:
            ShapeError: Missing name or shape disagreement
        """
        live = self.param_arrays()
        for name, target in live.items():
            if name not in arrays:
                raise ShapeError(name, list(target.shape), "missing", "load_arrays")
            source = np.asarray(arrays[name])
            if source.shape != target.shape:
                raise ShapeError(name, list(target.shape), list(source.shape), "load_arrays")
            target[...] = source

    def forward(
        self, x: Tensor, dropout_mask: Optional[Tensor] = None
    ) -> Tuple[Tensor, List[Any]]:
        """
        Raw head outputs (logits) and the caches of every layer

        Args:
            x (Tensor): Features [B, L, C]
            dropout_mask (Optional[Tensor]): Scaled keep-mask [B, 2H] applied to the BiLSTM state

        Returns:
            Tuple[Tensor, List[Any]]: Logits [B, head width] and per-layer caches
        """
        conv, pool, bilstm, dense = self.layers
        caches: List[Any] = []

        h, cache = conv.forward(x)
        caches.append(cache)
        h, cache = pool.forward(h)
        caches.append(cache)
        h, cache = bilstm.forward(h)
        caches.append(cache)
        if dropout_mask is not None:
            h = h * dropout_mask
        h, cache = dense.forward(h)
        caches.append(cache)

        return h, caches

    def backward(
        self, grad_logits: Tensor, caches: List[Any], dropout_mask: Optional[Tensor] = None
    ) -> Tuple[Tensor, Dict[str, Tensor]]:
        """
        Backpropagate from the logits through the whole stack

        Args:
            grad_logits (Tensor): Gradient w.r.t. the logits
            caches (List[Any]): Caches from forward
            dropout_mask (Optional[Tensor]): The mask used in forward

        Returns:
            Tuple[Tensor, Dict[str, Tensor]]: Input gradient and parameter gradients by name
        """
        grads: Dict[str, Tensor] = {}
        grad = grad_logits
        for index in reversed(range(len(self.layers))):
            layer = self.layers[index]
            grad, layer_grads = layer.backward(grad, caches[index])
            if layer_grads is not None:
                for key, value in layer_grads.arrays().items():
                    grads[f"{layer.name}.{key}"] = value
            if isinstance(layer, DenseLayer) and dropout_mask is not None:
                grad = grad * dropout_mask
        return grad, grads

    def loss_and_grads(
        self,
        x: Tensor,
        targets: np.ndarray,
        weights: Optional[ClassWeights],
        dropout_mask: Optional[Tensor] = None,
    ) -> Tuple[float, Dict[str, Tensor]]:
        """
        Weighted head loss and its parameter gradients

        Args:
            x (Tensor): Features [B, L, C]
            targets (np.ndarray): Labels for the head
            weights (Optional[ClassWeights]): Class weights; None means unweighted
            dropout_mask (Optional[Tensor]): Training-time dropout mask

        Returns:
            Tuple[float, Dict[str, Tensor]]: Mean loss and gradients by parameter name
        """
        logits, caches = self.forward(x, dropout_mask)
        if self.head == Head.BINARY:
            prob, act_cache = activation_forward(logits, ActivationKind.SIGMOID)
            loss, grad_prob = weighted_bce(prob, targets, weights)
            grad_logits = activation_backward(grad_prob, act_cache)
        else:
            loss, grad_logits = weighted_categorical_ce(logits, targets, weights)
        _, grads = self.backward(grad_logits, caches, dropout_mask)
        return loss, grads

    def probabilities(self, x: Tensor) -> Tensor:
        logits, _ = self.forward(x)
        return sigmoid(logits) if self.head == Head.BINARY else softmax(logits)


def build(config: ModelConfig, seed: int) -> CnnBiLstm:
    """
    Build an untrained model with Glorot-uniform weights, zero biases and forget bias 1

    Args:
        config (ModelConfig): Layer description
        seed (int): Initialization seed

    Raises:
        ConfigError: Invalid extents

    Returns:
        CnnBiLstm: Untrained model
    """
    config.validate()
    rng = np.random.default_rng(seed)
    f, k, c, h = config.filters, config.kernel, config.channels, config.hidden
    width = config.head_width

    conv = Conv1DParams(
        glorot_uniform(rng, (f, k, c), fan_in=k * c, fan_out=k * f),
        np.zeros(f, dtype=DEFAULT_DTYPE),
        Padding(config.padding),
    )

    def direction() -> LstmParams:
        bias = np.zeros((4, h), dtype=DEFAULT_DTYPE)
        bias[1] = 1.0
        return LstmParams(
            glorot_uniform(rng, (4, h, f), fan_in=f, fan_out=4 * h),
            glorot_uniform(rng, (4, h, h), fan_in=h, fan_out=4 * h),
            bias,
        )

    bilstm = BiLstmParams(direction(), direction())
    dense = DenseParams(
        glorot_uniform(rng, (width, 2 * h), fan_in=2 * h, fan_out=width),
        np.zeros(width, dtype=DEFAULT_DTYPE),
    )

    return CnnBiLstm(
        config,
        [Conv1DLayer(conv), MaxPool1DLayer(config.pool), BiLstmLayer(bilstm), DenseLayer(dense)],
    )


@dataclass(frozen=True)
class TrainedModel:
    """
    Immutable trained network with everything needed for standalone inference
    """

    network: CnnBiLstm
    encoder: Optional[EncoderState]
    class_names: Tuple[str, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for array in self.network.param_arrays().values():
            array.setflags(write=False)

    @property
    def config(self) -> ModelConfig:
        return self.network.config

    @property
    def head(self) -> Head:
        return self.network.head

    def param_count(self) -> int:
        return self.network.param_count()


def _freeze(network: CnnBiLstm) -> CnnBiLstm:
    return network.astype(network.dtype)


def _check_features(config: ModelConfig, features: Tensor) -> None:
    expected = (config.sequence_length, config.channels)
    if features.ndim != 3:
        raise ShapeError("rank", 3, features.ndim, "features")
    if tuple(features.shape[1:]) != expected:
        raise ShapeError("features", list(expected), list(features.shape[1:]), "features")


def _check_labels(head: Head, labels: np.ndarray) -> None:
    upper = 2 if head == Head.BINARY else head.width
    bad = np.flatnonzero((labels < 0) | (labels >= upper))
    if bad.size:
        raise DataError(f"labels outside [0, {upper}) for a {head.value} head", rows=bad[:10] + 1)


def _class_weights(
    head: Head, dataset: EncodedDataset, weighting: Weighting
) -> Optional[ClassWeights]:
    if Weighting(weighting) == Weighting.UNIFORM:
        return None
    return inverse_frequency_weights(class_distribution(dataset, head))


def _evaluate_loss(
    network: CnnBiLstm, dataset: EncodedDataset, weights: Optional[ClassWeights]
) -> Tuple[float, float]:
    head = network.head
    labels = dataset.labels(head)
    total, correct = 0.0, 0
    for start in range(0, len(dataset), PREDICT_CHUNK):
        x = dataset.features[start : start + PREDICT_CHUNK]
        y = labels[start : start + PREDICT_CHUNK]
        logits, _ = network.forward(x)
        if head == Head.BINARY:
            prob = sigmoid(logits)
            loss, _ = weighted_bce(prob, y, weights)
            predicted = (prob[:, 0] >= 0.5).astype(np.int64)
        else:
            loss, _ = weighted_categorical_ce(logits, y, weights)
            predicted = np.argmax(logits, axis=1)
        total += loss * x.shape[0]
        correct += int((predicted == y).sum())
    return total / len(dataset), correct / len(dataset)


def fit(
    network: CnnBiLstm,
    train: EncodedDataset,
    train_cfg: TrainConfig,
    threads: int = 1,
) -> Tuple[TrainedModel, TrainingHistory]:
    """
    Mini-batch Adam over shuffled epochs with the configured loss weighting

    Args:
        network (CnnBiLstm): Model from build; trained in place
        train (EncodedDataset): Training data
        train_cfg (TrainConfig): Schedule, seed and weighting
        threads (int, optional): Shards per mini-batch computed in parallel. Defaults to 1

    Raises:
        ConfigError: Invalid schedule
        DataError: Labels do not fit the head
        TrainingAbortedError: Non-finite loss

    Returns:
        Tuple[TrainedModel, TrainingHistory]: Frozen model and per-epoch history
    """
    logger = Logger("Model")
    train_cfg.validate()
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")

    head = network.head
    _check_features(network.config, train.features)
    _check_labels(head, train.labels(head))

    validation: Optional[EncodedDataset] = None
    if train_cfg.validation_fraction > 0:
        train, validation = split_random_stratified(
            train, train_cfg.validation_fraction, train_cfg.seed
        )

    weights = _class_weights(head, train, train_cfg.weighting)
    if weights is not None:
        logger.log_info(f"Class weights ({train_cfg.weighting.value}): {weights.to_list()}")

    dtype = network.dtype
    features = train.features.astype(dtype, copy=False)
    labels = train.labels(head)
    n = len(train)
    batch_size = train_cfg.batch_size
    rate = float(network.config.dropout)

    shuffle_rng = np.random.default_rng(train_cfg.seed)
    dropout_rng = np.random.default_rng(train_cfg.seed + 1)
    state = AdamState(lr=train_cfg.learning_rate)
    params = network.param_arrays()
    history = TrainingHistory()

    logger.log_info(
        f"Training {head.value} model ({network.param_count()} parameters) on {n} records, "
        f"{train_cfg.epochs} epochs, batch {batch_size}, lr {train_cfg.learning_rate}"
    )

    def shard_task(x: Tensor, y: np.ndarray, mask: Optional[Tensor], share: float):
        loss, grads = network.loss_and_grads(x, y, weights, mask)
        return loss * share, {k: g * share for k, g in grads.items()}

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for epoch in range(1, train_cfg.epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(n)
            epoch_loss = 0.0
            batches = range(0, n, batch_size)

            for batch_no, start in enumerate(
                logger.progress(batches, len(batches), f"Epoch {epoch}/{train_cfg.epochs}"), 1
            ):
                idx = order[start : start + batch_size]
                x, y = features[idx], labels[idx]

                mask = None
                if rate > 0:
                    keep = dropout_rng.random((idx.size, network.config.hidden * 2)) >= rate
                    mask = (keep / (1.0 - rate)).astype(dtype)

                shards = [s for s in np.array_split(np.arange(idx.size), threads) if s.size]
                futures = [
                    pool.submit(
                        shard_task,
                        x[s],
                        y[s],
                        None if mask is None else mask[s],
                        s.size / idx.size,
                    )
                    for s in shards
                ]
                # Fixed shard order keeps the float reduction reproducible
                ordered = futures if train_cfg.deterministic else list(as_completed(futures))

                batch_loss = 0.0
                grads: Dict[str, Tensor] = {}
                for future in ordered:
                    loss, shard_grads = future.result()
                    batch_loss += loss
                    for key, value in shard_grads.items():
                        grads[key] = grads[key] + value if key in grads else value

                if not np.isfinite(batch_loss):
                    logger.log_error(f"Non-finite loss at epoch {epoch}, batch {batch_no}")
                    raise TrainingAbortedError(epoch, batch_no, batch_loss)

                adam_step(params, grads, state)
                epoch_loss += batch_loss * idx.size

            val_loss: Optional[float] = None
            val_acc: Optional[float] = None
            if validation is not None:
                val_loss, val_acc = _evaluate_loss(network, validation, weights)

            elapsed = time.perf_counter() - started
            history.record(epoch_loss / n, val_loss, val_acc, elapsed)

            summary = f"Epoch {epoch}: train loss {epoch_loss / n:.5f}"
            if val_loss is not None:
                summary += f", val loss {val_loss:.5f}, val accuracy {val_acc:.4f}"
            logger.log_info(f"{summary} ({elapsed:.1f}s)")

    metadata = {
        "seed": train_cfg.seed,
        "epochs": train_cfg.epochs,
        "batch_size": batch_size,
        "learning_rate": train_cfg.learning_rate,
        "weighting": Weighting(train_cfg.weighting).value,
        "class_weights": None if weights is None else weights.to_list(),
        "train_records": n,
        "provenance": train.provenance,
        "final_train_loss": history.train_loss[-1],
        "final_val_loss": history.val_loss[-1],
    }

    logger.log_success(f"Training finished in {history.total_seconds:.1f}s")
    trained = TrainedModel(
        _freeze(network), train.encoder, tuple(class_names(head)), metadata
    )
    return trained, history


def predict_proba(model: TrainedModel, features: Tensor, threads: int = 1) -> Tensor:
    """
    Sigmoid probabilities [N, 1] or softmax distributions [N, 10]

    Args:
        model (TrainedModel): Trained model
        features (Tensor): Encoded features [N, L, C]
        threads (int, optional): Parallel chunk workers. Defaults to 1

    Raises:
        ShapeError: Features do not match the model input

    Returns:
        Tensor: Probabilities in input order
    """
    _check_features(model.config, features)
    network = model.network
    x = features.astype(network.dtype, copy=False)
    chunks = [x[s : s + PREDICT_CHUNK] for s in range(0, x.shape[0], PREDICT_CHUNK)]
    if not chunks:
        return np.zeros((0, network.config.head_width), dtype=network.dtype)

    if threads <= 1 or len(chunks) == 1:
        parts = [network.probabilities(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(network.probabilities, chunks))
    return np.concatenate(parts)


def labels_from_proba(proba: Tensor, threshold: float = 0.5) -> np.ndarray:
    """
    Decision rule: binary prob >= threshold is attack; multiclass argmax with ties to the lowest index

    Args:
        proba (Tensor): Output of predict_proba
        threshold (float, optional): Binary threshold in [0, 1]. Defaults to 0.5

    Raises:
        ConfigError: Threshold outside [0, 1]

    Returns:
        np.ndarray: Labels
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    if proba.shape[1] == 1:
        return (proba[:, 0] >= threshold).astype(np.int64)
    return np.argmax(proba, axis=1).astype(np.int64)


def predict_labels(
    model: TrainedModel, features: Tensor, threshold: float = 0.5, threads: int = 1
) -> np.ndarray:
    """
    Predicted labels for encoded features

    Args:
        model (TrainedModel): Trained model
        features (Tensor): Encoded features [N, L, C]
        threshold (float, optional): Binary threshold in [0, 1]. Defaults to 0.5
        threads (int, optional): Parallel chunk workers. Defaults to 1

    Returns:
        np.ndarray: Labels
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {threshold}")
    return labels_from_proba(predict_proba(model, features, threads), threshold)
