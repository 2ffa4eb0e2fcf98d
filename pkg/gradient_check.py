"""
Central finite differences for checking analytic gradients in double precision
"""

from typing import Callable, Iterable, Optional, Tuple

import numpy as np

STEP = 1e-5


def numeric_gradient(
    fn: Callable[[], float],
    array: np.ndarray,
    indices: Optional[Iterable[Tuple[int, ...]]] = None,
    step: float = STEP,
) -> np.ndarray:
    """
    Estimate d fn / d array by perturbing entries of the array in place

    Args:
        fn (Callable[[], float]): Scalar function reading the array
        array (np.ndarray): float64 array perturbed in place and restored
        indices (Optional[Iterable[Tuple[int, ...]]]): Entries to perturb; all when omitted
        step (float, optional): Perturbation. Defaults to 1e-5

    Returns:
        np.ndarray: Estimated gradient, zero at entries left unperturbed
    """
    if array.dtype != np.float64:
        raise TypeError(f"finite differences need float64, got {array.dtype}")

    grad = np.zeros_like(array)
    entries = indices if indices is not None else np.ndindex(*array.shape)
    for index in entries:
        original = array[index]
        array[index] = original + step
        plus = fn()
        array[index] = original - step
        minus = fn()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """
    max |a - n| / max(|a| + |n|, floor)

    Args:
        analytic (np.ndarray): Backpropagated gradient
        numeric (np.ndarray): Finite-difference estimate
        floor (float, optional): Denominator floor for near-zero gradients. Defaults to 1e-8

    Returns:
        float: Largest elementwise relative error
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))


def random_indices(
    rng: np.random.Generator, shape: Tuple[int, ...], count: int
) -> list:
    """
    Up to `count` distinct random positions of an array shape

    Args:
        rng (np.random.Generator): Random source
        shape (Tuple[int, ...]): Array shape
        count (int): Number of positions

    Returns:
        list: Index tuples
    """
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(count, size), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]
