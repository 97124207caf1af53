"""Neural-network primitives on NCHW tensors."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DomainError
from .core import Tensor, as_tensor, make_op


def _require_4d(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{what} expects an NCHW tensor, got shape {x.shape}")


def conv2d(x, weight, bias=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Args:
        x: input of shape (N, C, H, W).
        weight: filters of shape (F, C, k, k).
        bias: optional (F,) tensor.
        stride: step between windows.
        pad: zero padding added on every border.

    Returns:
        Tensor of shape (N, F, H', W') with H' = (H + 2 pad - k) / stride + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _require_4d(x, "conv2d")
    if weight.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D, got {weight.shape}")
    n, c, h, w = x.shape
    f, wc, k, k2 = weight.shape
    if wc != c or k != k2:
        raise DimensionError(f"weight {weight.shape} incompatible with input {x.shape}")
    if k < 1 or pad < 0 or stride < 1:
        raise DimensionError("conv2d needs k >= 1, pad >= 0, stride >= 1")
    hp, wp = h + 2 * pad, w + 2 * pad
    if (hp - k) % stride or (wp - k) % stride or hp < k or wp < k:
        raise DimensionError(f"non-integral output size for H={h}, W={w}, k={k}, stride={stride}, pad={pad}")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (f,):
            raise DimensionError(f"bias shape {bias.shape} != ({f},)")

    # channel-major padded copy; columns laid out as (C, k, k, N, Ho, Wo) so the
    # weight matmul needs no transpose
    xpt = np.zeros((c, n, hp, wp))
    xpt[:, :, pad:pad + h, pad:pad + w] = x.data.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, n, ho, wo))
    he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xpt[:, :, i:i + he:stride, j:j + we:stride]
    del xpt
    cols2 = cols.reshape(c * k * k, n * ho * wo)
    w2 = weight.data.reshape(f, c * k * k)
    out = (w2 @ cols2).reshape(f, n, ho, wo).transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    else:
        out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(f, n * ho * wo)
        gw = (g2 @ cols2.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (w2.T @ g2).reshape(c, k, k, n, ho, wo)
            dxp = np.zeros((c, n, hp, wp))
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + he:stride, j:j + we:stride] += dcols[:, i, j]
            gx = np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w].transpose(1, 0, 2, 3))
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out, parents, backward, "conv2d")


def maxpool2d(x, window: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties send the gradient to the first element in scan order."""
    x = as_tensor(x)
    _require_4d(x, "maxpool2d")
    n, c, h, w = x.shape
    if window < 1 or h % window or w % window:
        raise DimensionError(f"spatial dims {(h, w)} not divisible by window {window}")
    ho, wo = h // window, w // window
    blocks = (x.data.reshape(n, c, ho, window, wo, window)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, ho, wo, window * window))
    arg = blocks.argmax(axis=-1)  # argmax returns the first occurrence
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = (gb.reshape(n, c, ho, wo, window, window)
              .transpose(0, 1, 2, 4, 3, 5)
              .reshape(n, c, h, w))
        return (gx,)

    return make_op(out, (x,), backward, "maxpool2d")


def _upsample_matrix(size: int) -> np.ndarray:
    """(2*size, size) bilinear 2x interpolation weights, half-pixel centres, edge clamped."""
    m = np.zeros((2 * size, size))
    for o in range(2 * size):
        src = max((o + 0.5) / 2.0 - 0.5, 0.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, size - 1)
        frac = src - i0
        m[o, i0] += 1.0 - frac
        m[o, i1] += frac
    return m


_UPSAMPLE_CACHE: dict[int, np.ndarray] = {}


def _upmat(size: int) -> np.ndarray:
    m = _UPSAMPLE_CACHE.get(size)
    if m is None:
        m = _UPSAMPLE_CACHE[size] = _upsample_matrix(size)
    return m


def upsample_bilinear2x(x) -> Tensor:
    """Bilinear 2x upsampling (align_corners=False convention)."""
    x = as_tensor(x)
    _require_4d(x, "upsample_bilinear2x")
    _, _, h, w = x.shape
    if h < 1 or w < 1:
        raise DimensionError("empty spatial dims")
    mh, mw = _upmat(h), _upmat(w)
    out = np.matmul(np.matmul(mh, x.data), mw.T)

    def backward(g):
        return (np.matmul(np.matmul(mh.T, g), mw),)

    return make_op(out, (x,), backward, "upsample_bilinear2x")


def instance_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) normalisation over H, W followed by a per-channel affine map."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    _require_4d(x, "instance_norm")
    c = x.shape[1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise DimensionError(f"gain/bias must have shape ({c},)")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv = gain.data[None, :, None, None]
    out = xhat * gv + bias.data[None, :, None, None]

    def backward(g):
        gg = (g * xhat).sum(axis=(0, 2, 3)) if gain.requires_grad else None
        gbias = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gv
            gx = inv * (dxhat - dxhat.mean(axis=(2, 3), keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=(2, 3), keepdims=True))
        return gx, gg, gbias

    return make_op(out, (x, gain, bias), backward, "instance_norm")


def dropout(x, p: float, active: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``p`` and rescale survivors by 1/(1-p)."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout probability must be in [0, 1), got {p}")
    if not active or p == 0.0:
        return x
    if rng is None:
        raise ValueError("active dropout needs an rng")
    scale = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_op(x.data * scale, (x,), lambda g: (g * scale,), "dropout")
