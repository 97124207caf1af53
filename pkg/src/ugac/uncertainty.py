"""Aleatoric (GGD closed form), epistemic (MC dropout) and total uncertainty, plus residual correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import tensor as T
from .errors import DataError, DimensionError
from .ggd import aleatoric_variance
from .nets import CasUNet3Head, RunContext, to_ggd_params

DEFAULT_MC_PASSES = 50


def aleatoric_map(alpha_map, beta_map) -> np.ndarray:
    """Per-pixel GGD variance alpha^2 Gamma(3/beta) / Gamma(1/beta)."""
    a, b = np.asarray(alpha_map, dtype=np.float64), np.asarray(beta_map, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"alpha {a.shape} and beta {b.shape} maps differ in shape")
    return np.asarray(aleatoric_variance(a, b), dtype=np.float64)


class RunningVariance:
    """Welford accumulator for the population variance of a stream of equally shaped arrays."""

    def __init__(self):
        self.count = 0
        self.mean: np.ndarray | None = None
        self._m2: np.ndarray | None = None

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64)
        if self.mean is None:
            self.mean = x.copy()
            self._m2 = np.zeros_like(x)
            self.count = 1
            return
        if x.shape != self.mean.shape:
            raise DimensionError(f"sample shape {x.shape} != {self.mean.shape}")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no samples")
        return self._m2 / self.count


def generator_outputs(gen: CasUNet3Head, x: np.ndarray, ctx: RunContext = RunContext(),
                      chunk: int = 8) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, alpha, beta) maps for an (N, C, H, W) stack, evaluated without a graph."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"expected (N, C, H, W), got {x.shape}")
    parts = []
    with T.no_grad():
        for i in range(0, len(x), chunk):
            mean, alpha, beta = to_ggd_params(gen(T.Tensor(x[i:i + chunk]), ctx))
            parts.append((mean.data, alpha.data, beta.data))
    return tuple(np.concatenate(p) for p in zip(*parts))


def epistemic_map(gen: CasUNet3Head, x: np.ndarray, passes: int = DEFAULT_MC_PASSES,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Population variance of the mean head over ``passes`` dropout-active forward passes."""
    if passes < 2:
        raise ValueError("need at least 2 MC passes")
    rng = np.random.default_rng(0) if rng is None else rng
    acc = RunningVariance()
    ctx = RunContext(dropout=True, rng=rng)
    for _ in range(passes):
        acc.add(generator_outputs(gen, x, ctx)[0])
    return acc.variance()


@dataclass
class UncertaintyMaps:
    aleatoric: np.ndarray
    epistemic: np.ndarray
    total: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        """Standard deviation, in the units of the image."""
        return np.sqrt(self.total)


def total_uncertainty(a_map, e_map) -> UncertaintyMaps:
    a, e = np.asarray(a_map, dtype=np.float64), np.asarray(e_map, dtype=np.float64)
    if a.shape != e.shape:
        raise DimensionError(f"aleatoric {a.shape} and epistemic {e.shape} maps differ in shape")
    if (a < 0).any() or (e < 0).any():
        raise ValueError("variances must be non-negative")
    return UncertaintyMaps(a, e, a + e)


@dataclass
class Prediction:
    mean: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    maps: UncertaintyMaps


def predict(gen: CasUNet3Head, x: np.ndarray, mc_passes: int = 0,
            rng: np.random.Generator | None = None) -> Prediction:
    """Deterministic prediction with aleatoric maps; epistemic variance is added when ``mc_passes >= 2``."""
    mean, alpha, beta = generator_outputs(gen, x)
    alea = aleatoric_map(alpha, beta)
    epi = epistemic_map(gen, x, mc_passes, rng) if mc_passes else np.zeros_like(alea)
    return Prediction(mean, alpha, beta, total_uncertainty(alea, epi))


@dataclass
class CorrelationStats:
    mean_residual: np.ndarray  # per image, mean |prediction - truth|
    mean_sigma: np.ndarray     # per image, mean sqrt(total variance)
    pearson: float
    spearman: float


def uncertainty_residual_stats(predictions, ground_truth, totals) -> CorrelationStats:
    """Correlate per-image mean absolute residual with per-image mean sigma over a set of images."""
    p = np.asarray(predictions, dtype=np.float64)
    g = np.asarray(ground_truth, dtype=np.float64)
    t = np.asarray(totals, dtype=np.float64)
    if p.shape != g.shape or p.shape != t.shape:
        raise DimensionError(f"shapes differ: {p.shape}, {g.shape}, {t.shape}")
    if p.ndim < 2 or len(p) < 3:
        raise DataError("need at least 3 images")
    if (t < 0).any() or not np.isfinite(t).all():
        raise DataError("total variances must be finite and non-negative")
    axes = tuple(range(1, p.ndim))
    res = np.abs(p - g).mean(axis=axes)
    sig = np.sqrt(t).mean(axis=axes)
    if np.ptp(res) == 0 or np.ptp(sig) == 0:
        raise DataError("correlation undefined: residual or sigma is constant across images")
    pearson = float(np.corrcoef(res, sig)[0, 1])
    spearman = float(stats.spearmanr(res, sig).statistic)
    return CorrelationStats(res, sig, pearson, spearman)
