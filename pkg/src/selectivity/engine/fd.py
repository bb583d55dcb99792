"""Central-difference gradients for checking the reverse-mode engine."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4
) -> np.ndarray:
    """Numerically differentiate a scalar-valued function of an array.

    O(n) function evaluations per element pair — intended for small inputs in
    tests, not production use.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad
