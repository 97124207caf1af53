"""Training objectives: GGD cycle loss, its L1 special case and least-squares adversarial terms.

The per-pixel cycle penalty is ``(|r|/alpha)^beta - log(beta/alpha) + log Gamma(1/beta)``.
It drops the constant ``ln 2`` of the exact GGD negative log density, which
changes no gradient.  Means run over every element, batch included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .errors import DimensionError, DomainError
from .ggd import digamma, log_gamma
from .tensor import Tensor

@dataclass(frozen=True)
class LossWeights:
    """lambda1 scales the cycle term, lambda2 the adversarial term."""

    lambda1: float = 10.0
    lambda2: float = 2.0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("loss weights must be positive")


class CycleSide(NamedTuple):
    """One domain's contribution: reconstruction, alpha map, beta map, original input."""

    recon: Tensor
    alpha: Tensor
    beta: Tensor
    target: Tensor


def _same_shape(*ts: Tensor) -> None:
    shapes = {t.shape for t in ts}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")


def loss_alpha_beta(recon, alpha_map, beta_map, target) -> Tensor:
    """Mean over all pixels of the GGD cycle penalty, differentiable in all four inputs.

    ``alpha_map`` must be positive and ``beta_map`` inside the clamped range.
    """
    recon, alpha_map, beta_map, target = (T.as_tensor(t) for t in (recon, alpha_map, beta_map, target))
    _same_shape(recon, alpha_map, beta_map, target)
    r = recon.data - target.data
    a, b = alpha_map.data, beta_map.data
    # a NaN map from a diverged network gives a NaN loss for the caller to report
    if np.any(a <= 0) or np.any(b <= 0):
        raise DomainError("alpha and beta maps must be positive")
    k = r.size
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        nan = lambda t: np.full(t.shape, np.nan)
        return T.make_op(np.array(np.nan), (recon, alpha_map, beta_map, target),
                         lambda g: tuple(nan(t) for t in (recon, alpha_map, beta_map, target)), "loss_alpha_beta")
    abs_r = np.abs(r)
    nz = abs_r > 0
    # (|r|/alpha)^beta in log space; exactly 0 where the residual vanishes
    safe_r = np.where(nz, abs_r, 1.0)
    log_u = np.log(safe_r) - np.log(a)
    powered = np.where(nz, np.exp(b * log_u), 0.0)
    inv_b = 1.0 / b
    value = (powered - np.log(b) + np.log(a) + log_gamma(inv_b)).sum() / k

    def backward(g):
        scale = float(g) / k
        d_r = scale * b * powered / safe_r * np.sign(r)
        d_a = scale * (1.0 - b * powered) / a
        d_b = scale * (powered * log_u - inv_b - digamma(inv_b) * inv_b * inv_b)
        return d_r, d_a, d_b, -d_r

    return T.make_op(np.array(value), (recon, alpha_map, beta_map, target), backward, "loss_alpha_beta")


def loss_ucyc(side_a: CycleSide, side_b: CycleSide) -> Tensor:
    """Sum of the two domains' GGD cycle penalties."""
    return loss_alpha_beta(*side_a) + loss_alpha_beta(*side_b)


def l1(x, y) -> Tensor:
    x, y = T.as_tensor(x), T.as_tensor(y)
    _same_shape(x, y)
    return T.mean(T.abs_(x - y))


def loss_cyc_l1(recon_a, recon_b, a, b) -> Tensor:
    """Fixed-norm baseline: mean |recon_a - a| + mean |recon_b - b|."""
    return l1(recon_a, a) + l1(recon_b, b)


def mse_to(scores, target: float) -> Tensor:
    """Mean squared deviation of a score map from a constant target map."""
    scores = T.as_tensor(scores)
    d = scores - target
    return T.mean(d * d)


def adv_generator_loss(score_fake_b, score_fake_a) -> Tensor:
    """Least-squares generator term: both discriminators should call the fakes real (1)."""
    return mse_to(score_fake_b, 1.0) + mse_to(score_fake_a, 1.0)


def adv_discriminator_loss(score_real_b, score_fake_b, score_real_a, score_fake_a) -> Tensor:
    """Least-squares discriminator term with targets 1 (real) and 0 (fake) per domain."""
    return (mse_to(score_real_b, 1.0) + mse_to(score_fake_b, 0.0)
            + mse_to(score_real_a, 1.0) + mse_to(score_fake_a, 0.0))


def total_generator_loss(ucyc, adv_g, w: LossWeights = LossWeights()):
    """lambda1 * ucyc + lambda2 * adv_g (tensors or plain numbers)."""
    return ucyc * w.lambda1 + adv_g * w.lambda2
