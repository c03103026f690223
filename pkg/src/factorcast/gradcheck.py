"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], float], tensors: Sequence[Tensor], step: float = 1e-5):
    """Central differences of scalar ``fn()`` w.r.t. each tensor's data, in place."""
    grads = []
    for t in tensors:
        g = np.zeros(t.shape)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn()
            flat[i] = orig - step
            lo = fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest |a - n| / max(|a|, |n|) over entries with magnitude >= floor.

    Entries below ``floor`` on both sides are left out of the ratio; a gross
    absolute mismatch there (more than ``floor``) still counts as error 1.0.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=float).ravel()
        n = np.asarray(n, dtype=float).ravel()
        scale = np.maximum(np.abs(a), np.abs(n))
        big = scale >= floor
        if big.any():
            worst = max(worst, float(np.max(np.abs(a - n)[big] / scale[big])))
        small = ~big
        if small.any() and np.max(np.abs(a - n)[small]) > floor:
            worst = max(worst, 1.0)
    return worst


def check_gradients(build_loss: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5) -> float:
    """Compare backward gradients of ``build_loss()`` with central differences."""
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]
    numeric = numerical_grad(lambda: float(build_loss().data), tensors, step)
    return max_relative_error(analytic, numeric)
