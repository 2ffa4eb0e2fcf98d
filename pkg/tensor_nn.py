"""
Tensor layers for the CNN-BiLSTM engine
Implements 1-D convolution, max-pooling, dense, activations and LSTM/BiLSTM
with exact analytic forward and backward passes on numpy arrays
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Generic, Iterable, List, Optional, Tuple, TypeVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ConfigError, ShapeError

# Tensors are numpy arrays: shape is `.shape`, data is the C-ordered flat buffer
Tensor = np.ndarray

DEFAULT_DTYPE = np.float32


class Padding(str, Enum):
    """
    Convolution padding modes
    """

    SAME = "same"
    VALID = "valid"


class ActivationKind(str, Enum):
    """
    Supported elementwise and row-wise activations
    """

    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTMAX = "softmax"


def _require_rank(x: Tensor, rank: int, where: str) -> None:
    if x.ndim != rank:
        raise ShapeError("rank", rank, x.ndim, where)


def _require_cache(cache: Any, where: str) -> None:
    if cache is None:
        raise ConfigError(f"{where} called without a forward cache")


def glorot_uniform(
    rng: np.random.Generator,
    shape: Tuple[int, ...],
    fan_in: int,
    fan_out: int,
    dtype: Any = DEFAULT_DTYPE,
) -> Tensor:
    """
    Draw weights uniformly from [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out))

    Args:
        rng (np.random.Generator): Random source
        shape (Tuple[int, ...]): Output shape
        fan_in (int): Input fan
        fan_out (int): Output fan
        dtype (Any, optional): Output dtype. Defaults to float32

    Returns:
        Tensor: Initialized weights
    """
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------


class ParamSet(ABC):
    """
    Base class for layer parameter containers
    """

    @abstractmethod
    def arrays(self) -> Dict[str, Tensor]:
        """
        Named parameter arrays in a fixed order, shared with gradients and serialization

        Returns:
            Dict[str, Tensor]: Parameter name to array
        """

    def count(self) -> int:
        """
        Number of stored weight and bias scalars

        Returns:
            int: Scalar count
        """
        return int(sum(a.size for a in self.arrays().values()))


@dataclass
class Conv1DParams(ParamSet):
    """
    Weights [filters F, kernel K, in-channels C] and bias [F]
    """

    weights: Tensor
    bias: Tensor
    padding: Padding = Padding.SAME
    stride: int = 1

    @property
    def filters(self) -> int:
        return int(self.weights.shape[0])

    @property
    def kernel(self) -> int:
        return int(self.weights.shape[1])

    @property
    def channels(self) -> int:
        return int(self.weights.shape[2])

    def arrays(self) -> Dict[str, Tensor]:
        return {"weights": self.weights, "bias": self.bias}

    def astype(self, dtype: Any) -> "Conv1DParams":
        return Conv1DParams(
            self.weights.astype(dtype), self.bias.astype(dtype), self.padding, self.stride
        )


@dataclass
class DenseParams(ParamSet):
    """
    Weights [out, in] and bias [out]
    """

    weights: Tensor
    bias: Tensor

    def arrays(self) -> Dict[str, Tensor]:
        return {"weights": self.weights, "bias": self.bias}

    def astype(self, dtype: Any) -> "DenseParams":
        return DenseParams(self.weights.astype(dtype), self.bias.astype(dtype))


@dataclass
class LstmParams(ParamSet):
    """
    Gate-stacked LSTM parameters in input, forget, cell, output order:
    input weights [4, H, D], recurrent weights [4, H, H] and biases [4, H]
    """

    input_weights: Tensor
    recurrent_weights: Tensor
    bias: Tensor

    @property
    def hidden_size(self) -> int:
        return int(self.input_weights.shape[1])

    @property
    def input_size(self) -> int:
        return int(self.input_weights.shape[2])

    def arrays(self) -> Dict[str, Tensor]:
        return {
            "input_weights": self.input_weights,
            "recurrent_weights": self.recurrent_weights,
            "bias": self.bias,
        }

    def astype(self, dtype: Any) -> "LstmParams":
        return LstmParams(
            self.input_weights.astype(dtype),
            self.recurrent_weights.astype(dtype),
            self.bias.astype(dtype),
        )

    @staticmethod
    def zeros(hidden: int, inputs: int, dtype: Any = DEFAULT_DTYPE) -> "LstmParams":
        return LstmParams(
            np.zeros((4, hidden, inputs), dtype=dtype),
            np.zeros((4, hidden, hidden), dtype=dtype),
            np.zeros((4, hidden), dtype=dtype),
        )


@dataclass
class BiLstmParams(ParamSet):
    """
    Forward and backward LSTM parameters sharing H and D
    """

    forward: LstmParams
    backward: LstmParams

    def __post_init__(self) -> None:
        if self.forward.hidden_size != self.backward.hidden_size:
            raise ShapeError(
                "hidden", self.forward.hidden_size, self.backward.hidden_size, "BiLSTM"
            )
        if self.forward.input_size != self.backward.input_size:
            raise ShapeError("input", self.forward.input_size, self.backward.input_size, "BiLSTM")

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size

    @property
    def output_size(self) -> int:
        return 2 * self.forward.hidden_size

    def arrays(self) -> Dict[str, Tensor]:
        result: Dict[str, Tensor] = {}
        for prefix, params in (("forward", self.forward), ("backward", self.backward)):
            for name, array in params.arrays().items():
                result[f"{prefix}.{name}"] = array
        return result

    def astype(self, dtype: Any) -> "BiLstmParams":
        return BiLstmParams(self.forward.astype(dtype), self.backward.astype(dtype))


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


@dataclass
class Conv1DCache:
    """Saved windows of the padded input for the backward pass"""

    windows: Tensor
    input_length: int
    pad_left: int
    params: Conv1DParams


def _padding_amounts(kernel: int, padding: Padding) -> Tuple[int, int]:
    if padding == Padding.VALID:
        return 0, 0
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


def conv1d_forward(x: Tensor, params: Conv1DParams) -> Tuple[Tensor, Conv1DCache]:
    """
    1-D convolution over the length axis of a [B, L, C] input

    Args:
        x (Tensor): Input of shape [B, L, C]
        params (Conv1DParams): Layer parameters

    Returns:
        Tuple[Tensor, Conv1DCache]: Output [B, L', F] and the backward cache
    """
    _require_rank(x, 3, "conv1d")
    if params.stride != 1:
        raise ConfigError(f"conv1d: only stride 1 is supported, got {params.stride}")
    if x.shape[2] != params.channels:
        raise ShapeError("channels", params.channels, x.shape[2], "conv1d")

    kernel = params.kernel
    if params.padding == Padding.VALID and x.shape[1] < kernel:
        raise ShapeError("length", f">= {kernel}", x.shape[1], "conv1d")

    pad_left, pad_right = _padding_amounts(kernel, params.padding)
    padded = np.pad(x, ((0, 0), (pad_left, pad_right), (0, 0)))

    # [B, L', C, K]
    windows = sliding_window_view(padded, kernel, axis=1)
    out = np.einsum("btck,fkc->btf", windows, params.weights) + params.bias

    return out, Conv1DCache(windows, x.shape[1], pad_left, params)


def conv1d_backward(
    grad_out: Tensor, cache: Optional[Conv1DCache]
) -> Tuple[Tensor, Conv1DParams]:
    """
    Gradients of a 1-D convolution

    Args:
        grad_out (Tensor): Upstream gradient [B, L', F]
        cache (Conv1DCache): Cache from conv1d_forward

    Returns:
        Tuple[Tensor, Conv1DParams]: Input gradient [B, L, C] and parameter gradients
    """
    _require_cache(cache, "conv1d_backward")
    assert cache is not None
    params = cache.params
    batch, out_len, _ = grad_out.shape
    kernel = params.kernel

    grad_w = np.einsum("btck,btf->fkc", cache.windows, grad_out)
    grad_b = grad_out.sum(axis=(0, 1))

    padded_len = out_len + kernel - 1
    grad_padded = np.zeros((batch, padded_len, params.channels), dtype=grad_out.dtype)
    for k in range(kernel):
        grad_padded[:, k : k + out_len, :] += grad_out @ params.weights[:, k, :]

    grad_x = grad_padded[:, cache.pad_left : cache.pad_left + cache.input_length, :]

    return np.ascontiguousarray(grad_x), Conv1DParams(
        grad_w, grad_b, params.padding, params.stride
    )


# ---------------------------------------------------------------------------
# Max pooling
# ---------------------------------------------------------------------------


@dataclass
class MaxPoolCache:
    """Argmax positions inside each window"""

    argmax: Tensor
    input_shape: Tuple[int, ...]
    pool: int


def maxpool1d_forward(x: Tensor, pool: int) -> Tuple[Tensor, MaxPoolCache]:
    """
    Window-wise maximum over the length axis, dropping an incomplete trailing window

    Args:
        x (Tensor): Input [B, L, C]
        pool (int): Window width

    Returns:
        Tuple[Tensor, MaxPoolCache]: Output [B, L // pool, C] and the backward cache
    """
    _require_rank(x, 3, "maxpool1d")
    if pool < 1:
        raise ConfigError(f"maxpool1d: pool must be >= 1, got {pool}")
    batch, length, channels = x.shape
    if pool > length:
        raise ShapeError("length", f">= {pool}", length, "maxpool1d")

    out_len = length // pool
    windows = x[:, : out_len * pool, :].reshape(batch, out_len, pool, channels)
    # argmax returns the first maximum, so ties go to the earliest index
    argmax = np.argmax(windows, axis=2)
    out = np.take_along_axis(windows, argmax[:, :, None, :], axis=2)[:, :, 0, :]

    return out, MaxPoolCache(argmax, x.shape, pool)


def maxpool1d_backward(grad_out: Tensor, cache: Optional[MaxPoolCache]) -> Tensor:
    """
    Route the upstream gradient to the argmax of each window

    Args:
        grad_out (Tensor): Upstream gradient [B, L // pool, C]
        cache (MaxPoolCache): Cache from maxpool1d_forward

    Returns:
        Tensor: Input gradient [B, L, C]
    """
    _require_cache(cache, "maxpool1d_backward")
    assert cache is not None
    batch, length, channels = cache.input_shape
    out_len = grad_out.shape[1]

    routed = np.zeros((batch, out_len, cache.pool, channels), dtype=grad_out.dtype)
    np.put_along_axis(routed, cache.argmax[:, :, None, :], grad_out[:, :, None, :], axis=2)

    grad_x = np.zeros((batch, length, channels), dtype=grad_out.dtype)
    grad_x[:, : out_len * cache.pool, :] = routed.reshape(batch, out_len * cache.pool, channels)
    return grad_x


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------


@dataclass
class DenseCache:
    """Saved input for the backward pass"""

    inputs: Tensor
    params: DenseParams


def dense_forward(x: Tensor, params: DenseParams) -> Tuple[Tensor, DenseCache]:
    """
    Affine map out = x · Wᵀ + b

    Args:
        x (Tensor): Input [B, in]
        params (DenseParams): Layer parameters

    Returns:
        Tuple[Tensor, DenseCache]: Output [B, out] and the backward cache
    """
    _require_rank(x, 2, "dense")
    if x.shape[1] != params.weights.shape[1]:
        raise ShapeError("in", params.weights.shape[1], x.shape[1], "dense")
    return x @ params.weights.T + params.bias, DenseCache(x, params)


def dense_backward(grad_out: Tensor, cache: Optional[DenseCache]) -> Tuple[Tensor, DenseParams]:
    """
    Gradients of the affine map

    Args:
        grad_out (Tensor): Upstream gradient [B, out]
        cache (DenseCache): Cache from dense_forward

    Returns:
        Tuple[Tensor, DenseParams]: Input gradient [B, in] and parameter gradients
    """
    _require_cache(cache, "dense_backward")
    assert cache is not None
    grad_w = grad_out.T @ cache.inputs
    grad_b = grad_out.sum(axis=0)
    return grad_out @ cache.params.weights, DenseParams(grad_w, grad_b)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    """
    Numerically stable logistic function

    Args:
        x (Tensor): Input

    Returns:
        Tensor: Values in (0, 1)
    """
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    exp_x = np.exp(x[~pos])
    out[~pos] = exp_x / (1.0 + exp_x)
    return out


def softmax(x: Tensor) -> Tensor:
    """
    Softmax over the last axis with max subtraction

    Args:
        x (Tensor): Input

    Returns:
        Tensor: Rows summing to 1
    """
    shifted = x - x.max(axis=-1, keepdims=True)
    exp_x = np.exp(shifted)
    return exp_x / exp_x.sum(axis=-1, keepdims=True)


@dataclass
class ActivationCache:
    """Activation output (and input for relu) for the backward pass"""

    kind: ActivationKind
    inputs: Tensor
    outputs: Tensor


def activation_forward(x: Tensor, kind: ActivationKind) -> Tuple[Tensor, ActivationCache]:
    """
    Apply an activation

    Args:
        x (Tensor): Input
        kind (ActivationKind): Activation to apply; softmax works over the last axis

    Returns:
        Tuple[Tensor, ActivationCache]: Output and the backward cache
    """
    kind = ActivationKind(kind)
    if kind == ActivationKind.RELU:
        y = np.maximum(x, 0)
    elif kind == ActivationKind.SIGMOID:
        y = sigmoid(x)
    elif kind == ActivationKind.TANH:
        y = np.tanh(x)
    else:
        y = softmax(x)
    return y, ActivationCache(kind, x, y)


def activation_backward(grad_out: Tensor, cache: Optional[ActivationCache]) -> Tensor:
    """
    Input gradient of an activation

    Args:
        grad_out (Tensor): Upstream gradient
        cache (ActivationCache): Cache from activation_forward

    Returns:
        Tensor: Input gradient
    """
    _require_cache(cache, "activation_backward")
    assert cache is not None
    y = cache.outputs
    if cache.kind == ActivationKind.RELU:
        return grad_out * (cache.inputs > 0)
    if cache.kind == ActivationKind.SIGMOID:
        return grad_out * y * (1 - y)
    if cache.kind == ActivationKind.TANH:
        return grad_out * (1 - y * y)
    return y * (grad_out - (grad_out * y).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# LSTM / BiLSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmStepCache:
    """Gate activations of one time step"""

    x: Tensor
    h_prev: Tensor
    c_prev: Tensor
    i: Tensor
    f: Tensor
    g: Tensor
    o: Tensor
    tanh_c: Tensor


def lstm_cell_step(
    x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams
) -> Tuple[Tensor, Tensor, LstmStepCache]:
    """
    One LSTM step with sigmoid input/forget/output gates and tanh cell candidate

    Args:
        x_t (Tensor): Input [B, D]
        h_prev (Tensor): Previous hidden state [B, H]
        c_prev (Tensor): Previous cell state [B, H]
        params (LstmParams): Cell parameters

    Returns:
        Tuple[Tensor, Tensor, LstmStepCache]: h_t, c_t and the backward cache
    """
    hidden, inputs = params.hidden_size, params.input_size
    if x_t.ndim != 2 or x_t.shape[1] != inputs:
        raise ShapeError("input", inputs, x_t.shape[-1], "lstm_cell")
    if h_prev.shape != (x_t.shape[0], hidden):
        raise ShapeError("hidden", (x_t.shape[0], hidden), h_prev.shape, "lstm_cell")
    if c_prev.shape != (x_t.shape[0], hidden):
        raise ShapeError("cell", (x_t.shape[0], hidden), c_prev.shape, "lstm_cell")

    z = (
        x_t @ params.input_weights.reshape(4 * hidden, inputs).T
        + h_prev @ params.recurrent_weights.reshape(4 * hidden, hidden).T
        + params.bias.reshape(4 * hidden)
    )
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = sigmoid(z[:, 3 * hidden :])

    c_t = f * c_prev + i * g
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c

    return h_t, c_t, LstmStepCache(x_t, h_prev, c_prev, i, f, g, o, tanh_c)


def lstm_cell_backward(
    grad_h: Tensor, grad_c: Tensor, cache: Optional[LstmStepCache], params: LstmParams
) -> Tuple[Tensor, Tensor, Tensor, LstmParams]:
    """
    Backward pass of one LSTM step

    Args:
        grad_h (Tensor): Gradient w.r.t. h_t [B, H]
        grad_c (Tensor): Gradient w.r.t. c_t arriving from the next step [B, H]
        cache (LstmStepCache): Cache from lstm_cell_step
        params (LstmParams): Cell parameters

    Returns:
        Tuple[Tensor, Tensor, Tensor, LstmParams]: Gradients w.r.t. x_t, h_prev, c_prev and parameters
    """
    _require_cache(cache, "lstm_cell_backward")
    assert cache is not None
    hidden, inputs = params.hidden_size, params.input_size

    grad_o = grad_h * cache.tanh_c
    grad_c_total = grad_c + grad_h * cache.o * (1 - cache.tanh_c * cache.tanh_c)

    dz = np.concatenate(
        [
            grad_c_total * cache.g * cache.i * (1 - cache.i),
            grad_c_total * cache.c_prev * cache.f * (1 - cache.f),
            grad_c_total * cache.i * (1 - cache.g * cache.g),
            grad_o * cache.o * (1 - cache.o),
        ],
        axis=1,
    )

    w = params.input_weights.reshape(4 * hidden, inputs)
    u = params.recurrent_weights.reshape(4 * hidden, hidden)

    grads = LstmParams(
        (dz.T @ cache.x).reshape(4, hidden, inputs),
        (dz.T @ cache.h_prev).reshape(4, hidden, hidden),
        dz.sum(axis=0).reshape(4, hidden),
    )

    return dz @ w, dz @ u, grad_c_total * cache.f, grads


def _unroll(seq: Tensor, params: LstmParams) -> Tuple[Tensor, List[LstmStepCache]]:
    seq = np.ascontiguousarray(seq)
    batch, steps, _ = seq.shape
    h = np.zeros((batch, params.hidden_size), dtype=seq.dtype)
    c = np.zeros_like(h)
    hs = np.empty((batch, steps, params.hidden_size), dtype=seq.dtype)
    caches: List[LstmStepCache] = []
    for t in range(steps):
        h, c, cache = lstm_cell_step(seq[:, t, :], h, c, params)
        hs[:, t, :] = h
        caches.append(cache)
    return hs, caches


def _unroll_backward(
    grad_hs: Tensor, caches: List[LstmStepCache], params: LstmParams
) -> Tuple[Tensor, LstmParams]:
    batch, steps, _ = grad_hs.shape
    grad_seq = np.empty((batch, steps, params.input_size), dtype=grad_hs.dtype)
    grads = LstmParams.zeros(params.hidden_size, params.input_size, grad_hs.dtype)
    grad_h_next = np.zeros((batch, params.hidden_size), dtype=grad_hs.dtype)
    grad_c_next = np.zeros_like(grad_h_next)

    for t in reversed(range(steps)):
        grad_x, grad_h_next, grad_c_next, step = lstm_cell_backward(
            grad_hs[:, t, :] + grad_h_next, grad_c_next, caches[t], params
        )
        grad_seq[:, t, :] = grad_x
        grads.input_weights += step.input_weights
        grads.recurrent_weights += step.recurrent_weights
        grads.bias += step.bias

    return grad_seq, grads


@dataclass
class BiLstmCache:
    """Per-direction step caches"""

    forward: List[LstmStepCache]
    backward: List[LstmStepCache]
    params: BiLstmParams
    steps: int


def bilstm_forward(seq: Tensor, params: BiLstmParams) -> Tuple[Tensor, Tensor, BiLstmCache]:
    """
    Bidirectional LSTM over a [B, T, D] sequence

    Args:
        seq (Tensor): Input sequence [B, T, D]
        params (BiLstmParams): Both directions' parameters

    Returns:
        Tuple[Tensor, Tensor, BiLstmCache]: Per-step outputs [B, T, 2H],
            final state [h_T forward; h_1 backward] of shape [B, 2H] and the backward cache
    """
    _require_rank(seq, 3, "bilstm")
    if seq.shape[1] < 1:
        raise ShapeError("time", ">= 1", seq.shape[1], "bilstm")
    if seq.shape[2] != params.forward.input_size:
        raise ShapeError("input", params.forward.input_size, seq.shape[2], "bilstm")

    hs_f, caches_f = _unroll(seq, params.forward)
    hs_b_rev, caches_b = _unroll(seq[:, ::-1, :], params.backward)

    outputs = np.concatenate([hs_f, hs_b_rev[:, ::-1, :]], axis=2)
    final = np.concatenate([hs_f[:, -1, :], hs_b_rev[:, -1, :]], axis=1)

    return outputs, final, BiLstmCache(caches_f, caches_b, params, seq.shape[1])


def bilstm_backward(
    grad_outputs: Optional[Tensor], grad_final: Optional[Tensor], cache: Optional[BiLstmCache]
) -> Tuple[Tensor, BiLstmParams]:
    """
    Backpropagation through time for both directions

    Args:
        grad_outputs (Optional[Tensor]): Gradient w.r.t. per-step outputs [B, T, 2H], or None
        grad_final (Optional[Tensor]): Gradient w.r.t. the final state [B, 2H], or None
        cache (BiLstmCache): Cache from bilstm_forward

    Returns:
        Tuple[Tensor, BiLstmParams]: Gradient w.r.t. the sequence [B, T, D] and parameter gradients
    """
    _require_cache(cache, "bilstm_backward")
    assert cache is not None
    hidden = cache.params.hidden_size
    reference = grad_outputs if grad_outputs is not None else grad_final
    if reference is None:
        raise ConfigError("bilstm_backward needs grad_outputs or grad_final")
    batch = reference.shape[0]
    dtype = reference.dtype

    grad_f = np.zeros((batch, cache.steps, hidden), dtype=dtype)
    grad_b_rev = np.zeros((batch, cache.steps, hidden), dtype=dtype)
    if grad_outputs is not None:
        grad_f += grad_outputs[:, :, :hidden]
        grad_b_rev += grad_outputs[:, ::-1, hidden:]
    if grad_final is not None:
        grad_f[:, -1, :] += grad_final[:, :hidden]
        grad_b_rev[:, -1, :] += grad_final[:, hidden:]

    grad_seq_f, grads_f = _unroll_backward(grad_f, cache.forward, cache.params.forward)
    grad_seq_b, grads_b = _unroll_backward(grad_b_rev, cache.backward, cache.params.backward)

    return grad_seq_f + grad_seq_b[:, ::-1, :], BiLstmParams(grads_f, grads_b)


# ---------------------------------------------------------------------------
# Layer objects used by the model stack
# ---------------------------------------------------------------------------

P = TypeVar("P")


class Layer(ABC, Generic[P]):
    """
    Abstract layer wrapping one parameter set (or none) and its forward/backward functions
    """

    name: str = "layer"

    def __init__(self, params: P) -> None:
        self.params = params

    @abstractmethod
    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        """
        Run the forward pass

        Args:
            x (Tensor): Layer input

        Returns:
            Tuple[Tensor, Any]: Output and the cache needed by backward
        """

    @abstractmethod
    def backward(self, grad_out: Tensor, cache: Any) -> Tuple[Tensor, Optional[P]]:
        """
        Run the backward pass

        Args:
            grad_out (Tensor): Upstream gradient
            cache (Any): Cache returned by forward

        Returns:
            Tuple[Tensor, Optional[P]]: Input gradient and parameter gradients (None if stateless)
        """

    def param_arrays(self) -> Dict[str, Tensor]:
        """
        Parameter arrays prefixed with the layer name

        Returns:
            Dict[str, Tensor]: Qualified name to array
        """
        if not isinstance(self.params, ParamSet):
            return {}
        return {f"{self.name}.{k}": v for k, v in self.params.arrays().items()}

    def describe(self) -> Dict[str, Any]:
        """
        Short description used by model inspection

        Returns:
            Dict[str, Any]: Layer kind, parameter shapes and count
        """
        arrays = self.param_arrays()
        return {
            "layer": self.name,
            "kind": self.__class__.__name__,
            "shapes": {k: list(v.shape) for k, v in arrays.items()},
            "parameters": int(sum(a.size for a in arrays.values())),
        }


class Conv1DLayer(Layer[Conv1DParams]):
    """Convolution followed by an activation"""

    def __init__(self, params: Conv1DParams, act: ActivationKind = ActivationKind.RELU) -> None:
        super().__init__(params)
        self.name = "conv"
        self.act = act

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        z, conv_cache = conv1d_forward(x, self.params)
        y, act_cache = activation_forward(z, self.act)
        return y, (conv_cache, act_cache)

    def backward(self, grad_out: Tensor, cache: Any) -> Tuple[Tensor, Optional[Conv1DParams]]:
        _require_cache(cache, "Conv1DLayer.backward")
        conv_cache, act_cache = cache
        return conv1d_backward(activation_backward(grad_out, act_cache), conv_cache)


class MaxPool1DLayer(Layer[None]):
    """Stateless max-pooling"""

    def __init__(self, pool: int) -> None:
        super().__init__(None)
        self.name = "pool"
        self.pool = pool

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        return maxpool1d_forward(x, self.pool)

    def backward(self, grad_out: Tensor, cache: Any) -> Tuple[Tensor, None]:
        return maxpool1d_backward(grad_out, cache), None

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["pool"] = self.pool
        return info


class BiLstmLayer(Layer[BiLstmParams]):
    """BiLSTM emitting its final-state concatenation [B, 2H]"""

    def __init__(self, params: BiLstmParams) -> None:
        super().__init__(params)
        self.name = "bilstm"

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        _, final, cache = bilstm_forward(x, self.params)
        return final, cache

    def backward(self, grad_out: Tensor, cache: Any) -> Tuple[Tensor, Optional[BiLstmParams]]:
        return bilstm_backward(None, grad_out, cache)


class DenseLayer(Layer[DenseParams]):
    """Affine output head; the head activation is applied by the model"""

    def __init__(self, params: DenseParams) -> None:
        super().__init__(params)
        self.name = "dense"

    def forward(self, x: Tensor) -> Tuple[Tensor, Any]:
        return dense_forward(x, self.params)

    def backward(self, grad_out: Tensor, cache: Any) -> Tuple[Tensor, Optional[DenseParams]]:
        return dense_backward(grad_out, cache)


def param_count(layers: Iterable[Layer[Any]]) -> int:
    """
    Count every stored weight and bias scalar of a layer stack

    Args:
        layers (Iterable[Layer]): Layer stack, possibly empty

    Returns:
        int: Total parameter count
    """
    return int(sum(a.size for layer in layers for a in layer.param_arrays().values()))


def conv1d_param_count(filters: int, kernel: int, channels: int) -> int:
    """Closed-form convolution parameter count F·K·C + F"""
    return filters * kernel * channels + filters


def bilstm_param_count(hidden: int, inputs: int) -> int:
    """Closed-form BiLSTM parameter count 2·4·(H·D + H·H + H)"""
    return 2 * 4 * (hidden * inputs + hidden * hidden + hidden)


def dense_param_count(out: int, inputs: int) -> int:
    """Closed-form dense parameter count out·in + out"""
    return out * inputs + out
