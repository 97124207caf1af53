"""Test-time input corruptions and their four severity levels.

Outputs are not clipped back to [0, 1]; the corrupted image is exactly
``x + noise`` (or ``x`` with replaced pixels for impulse noise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

FAMILIES = ("gaussian", "uniform", "impulse")
LEVELS = ("NL0", "NL1", "NL2", "NL3")
SCHEDULES: dict[str, tuple[float, ...]] = {
    "gaussian": (0.0, 0.10, 0.20, 0.30),  # noise std sigma
    "uniform": (0.0, 0.20, 0.40, 0.60),   # noise range kappa
    "impulse": (0.0, 0.15, 0.30, 0.45),   # replacement probability p
}


@dataclass(frozen=True)
class PerturbSpec:
    family: str
    level: str
    parameter: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}; choose from {LEVELS}")

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return perturb(x, self.family, self.parameter, rng)


def level_schedule(family: str) -> list[PerturbSpec]:
    if family not in SCHEDULES:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    return [PerturbSpec(family, lvl, p) for lvl, p in zip(LEVELS, SCHEDULES[family])]


def spec_for(family: str, level: str) -> PerturbSpec:
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; choose from {LEVELS}")
    return level_schedule(family)[LEVELS.index(level)]


def perturb_gaussian(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """x + N(0, sigma^2) per pixel."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + rng.normal(0.0, sigma, size=x.shape)


def perturb_uniform(x: np.ndarray, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """x + U[0, kappa] per pixel; the noise has mean kappa / 2."""
    if kappa < 0:
        raise DomainError("kappa must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if kappa == 0:
        return x.copy()
    return x + rng.uniform(0.0, kappa, size=x.shape)


def perturb_impulse(x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Replace each pixel with probability ``p`` by a random colour drawn from U[0, 1] per channel.

    ``x`` is (C, H, W) or (N, C, H, W); the replacement mask is shared by all
    channels of a pixel.
    """
    if not 0.0 <= p < 1.0:
        raise DomainError(f"impulse probability must be in [0, 1), got {p}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (3, 4):
        raise DomainError("impulse noise expects (C, H, W) or (N, C, H, W)")
    if p == 0:
        return x.copy()
    mask_shape = x.shape[:-3] + (1,) + x.shape[-2:]
    replace = rng.random(mask_shape) < p
    colours = rng.random(x.shape)
    return np.where(replace, colours, x)


_DISPATCH = {"gaussian": perturb_gaussian, "uniform": perturb_uniform, "impulse": perturb_impulse}


def perturb(x: np.ndarray, family: str, parameter: float, rng: np.random.Generator) -> np.ndarray:
    if family not in _DISPATCH:
        raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")
    return _DISPATCH[family](x, parameter, rng)
