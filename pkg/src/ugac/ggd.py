"""Generalized Gaussian distribution: special functions, density, NLL kernel, sampling, moments.

Density with location ``mu``, scale ``alpha`` and shape ``beta``::

    p(x) = beta / (2 alpha Gamma(1/beta)) * exp(-(|x - mu| / alpha) ** beta)

``beta = 1`` is the Laplace distribution and ``beta = 2`` a Gaussian with
variance ``alpha**2 / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ALPHA_MIN = 1e-3
BETA_MIN = 1e-2
BETA_MAX = 10.0

# Lanczos approximation, g = 7, nine coefficients.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos_parts(z: np.ndarray):
    """For z >= 0.5: (series A(z-1), its derivative, t) with Gamma(z) = sqrt(2 pi) t^(z-0.5) e^-t A."""
    zm1 = z - 1.0
    a = np.full_like(z, _LANCZOS_COEF[0])
    da = np.zeros_like(z)
    for i in range(1, len(_LANCZOS_COEF)):
        denom = zm1 + i
        a += _LANCZOS_COEF[i] / denom
        da -= _LANCZOS_COEF[i] / (denom * denom)
    t = zm1 + _LANCZOS_G + 0.5
    return a, da, t


def _as_positive_array(x, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError(f"{what} requires x > 0")
    return arr, arr.ndim == 0


def log_gamma(x):
    """ln Gamma(x) for x > 0 (scalar or array)."""
    arr, scalar = _as_positive_array(x, "log_gamma")
    z = np.atleast_1d(arr)
    out = np.empty_like(z)
    big = z >= 0.5
    if big.any():
        zb = z[big]
        a, _, t = _lanczos_parts(zb)
        out[big] = _HALF_LOG_2PI + (zb - 0.5) * np.log(t) - t + np.log(a)
    small = ~big
    if small.any():
        # reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        zs = z[small]
        a, _, t = _lanczos_parts(1.0 - zs)
        lg_1mz = _HALF_LOG_2PI + (0.5 - zs) * np.log(t) - t + np.log(a)
        out[small] = math.log(math.pi) - np.log(np.sin(math.pi * zs)) - lg_1mz
    return float(out[0]) if scalar else out.reshape(arr.shape)


def digamma(x):
    """d/dx ln Gamma(x), the exact derivative of :func:`log_gamma`'s approximation."""
    arr, scalar = _as_positive_array(x, "digamma")
    z = np.atleast_1d(arr)
    out = np.empty_like(z)
    big = z >= 0.5
    if big.any():
        zb = z[big]
        a, da, t = _lanczos_parts(zb)
        out[big] = np.log(t) + (zb - 0.5) / t - 1.0 + da / a
    small = ~big
    if small.any():
        zs = z[small]
        w = 1.0 - zs
        a, da, t = _lanczos_parts(w)
        psi_w = np.log(t) + (w - 0.5) / t - 1.0 + da / a
        out[small] = psi_w - math.pi / np.tan(math.pi * zs)
    return float(out[0]) if scalar else out.reshape(arr.shape)


@dataclass(frozen=True)
class GgdParams:
    """Location, scale and shape of one generalized Gaussian."""

    mu: float = 0.0
    alpha: float = 1.0
    beta: float = 2.0

    def __post_init__(self):
        validate(self.alpha, self.beta)
        if not math.isfinite(self.mu):
            raise DomainError("mu must be finite")

    @classmethod
    def clamped(cls, mu: float, alpha: float, beta: float) -> "GgdParams":
        """Build params after forcing alpha >= ALPHA_MIN and beta into [BETA_MIN, BETA_MAX]."""
        return cls(mu, max(alpha, ALPHA_MIN), min(max(beta, BETA_MIN), BETA_MAX))


def validate(alpha, beta) -> None:
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DomainError("alpha and beta must be finite")
    if np.any(a < ALPHA_MIN):
        raise DomainError(f"alpha must be >= {ALPHA_MIN}")
    if np.any(b < BETA_MIN) or np.any(b > BETA_MAX):
        raise DomainError(f"beta must lie in [{BETA_MIN}, {BETA_MAX}]")


def ggd_pdf(eps, p: GgdParams):
    """Density of GGD(mu, alpha, beta) at ``eps``."""
    e = np.asarray(eps, dtype=np.float64)
    norm = p.beta / (2.0 * p.alpha * math.exp(log_gamma(1.0 / p.beta)))
    out = norm * np.exp(-(np.abs(e - p.mu) / p.alpha) ** p.beta)
    return float(out) if out.ndim == 0 else out


def nll_pixel(residual, alpha, beta):
    """Per-pixel cycle penalty ``(|r|/alpha)^beta - log(beta/alpha) + log Gamma(1/beta)``.

    This is the exact GGD negative log density minus the constant ln 2.
    """
    validate(alpha, beta)
    r = np.asarray(residual, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    out = (np.abs(r) / a) ** b - np.log(b / a) + log_gamma(1.0 / b)
    return float(out) if np.ndim(out) == 0 else out


def ggd_sample(p: GgdParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` samples as mu + s * alpha * G^(1/beta), G ~ Gamma(1/beta, 1), s = +-1."""
    g = rng.gamma(1.0 / p.beta, 1.0, size=n)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return p.mu + sign * p.alpha * g ** (1.0 / p.beta)


def aleatoric_variance(alpha, beta):
    """Variance alpha^2 Gamma(3/beta) / Gamma(1/beta) of a GGD (scalar or elementwise).

    Very small beta pushes the true value past the float64 range; those entries are inf.
    """
    validate(alpha, beta)
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = a * a * np.exp(log_gamma(3.0 / b) - log_gamma(1.0 / b))
    return float(out) if np.ndim(out) == 0 else out
