"""
Adam optimizer with bias-corrected moment estimates
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from errors import ShapeError


@dataclass
class AdamState:
    """
    Per-parameter first and second moments plus the step counter
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState
) -> Dict[str, np.ndarray]:
    """
    Apply one Adam update in place

    Args:
        params (Dict[str, np.ndarray]): Named parameter arrays, updated in place
        grads (Dict[str, np.ndarray]): Gradients with the same names and shapes
        state (AdamState): Optimizer state owned by the caller's training loop

    Returns:
        Dict[str, np.ndarray]: The updated parameters
    """
    state.t += 1

    bias_correction1 = 1.0 - state.beta1**state.t
    bias_correction2 = 1.0 - state.beta2**state.t
    step_size = state.lr / bias_correction1

    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(name, param.shape, grad.shape, "adam_step")

        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)

        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)

        param -= step_size * m / (np.sqrt(v / bias_correction2) + state.epsilon)

    return params
