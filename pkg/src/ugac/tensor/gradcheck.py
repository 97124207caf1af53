"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor


def numerical_grad(fn: Callable[[], Tensor], t: Tensor, step: float = 1e-5,
                   indices: Sequence[int] | None = None) -> np.ndarray:
    """d fn() / d t by central differences, perturbing ``t.data`` in place.

    With ``indices`` only those flat coordinates are evaluated; the others are
    left at zero.
    """
    flat = t.data.reshape(-1)
    grad = np.zeros(flat.size)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        fp = fn().item()
        flat[i] = orig - step
        fm = fn().item()
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * step)
    return grad.reshape(t.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
                    coords_per_param: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Relative error between backprop and finite differences over all ``params`` jointly.

    With ``coords_per_param`` only that many randomly chosen entries of each
    parameter are compared, which keeps checks of large networks affordable.
    """
    for p in params:
        p.grad = None
    fn().backward()
    rng = np.random.default_rng(0) if rng is None else rng
    analytic, numeric = [], []
    for p in params:
        g = (p.grad if p.grad is not None else np.zeros(p.shape)).ravel()
        if coords_per_param is None or coords_per_param >= p.size:
            idx = np.arange(p.size)
        else:
            idx = np.sort(rng.choice(p.size, coords_per_param, replace=False))
        analytic.append(g[idx])
        numeric.append(numerical_grad(fn, p, step, indices=idx).ravel()[idx])
    return relative_error(np.concatenate(analytic), np.concatenate(numeric))
