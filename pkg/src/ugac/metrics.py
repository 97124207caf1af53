"""Image similarity, robustness areas and segmentation scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionError
from .perturb import PerturbSpec

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def mse(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 2-D weighted window sums at every fully-contained position."""
    half = len(taps) // 2
    out = correlate1d(img, taps, axis=-1, mode="constant")
    out = correlate1d(out, taps, axis=-2, mode="constant")
    return out[..., half:img.shape[-2] - half, half:img.shape[-1] - half]


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every valid 11x11 window of two (H, W) images."""
    taps = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mx * mx
    syy = _filter_valid(y * y, taps) - my * my
    sxy = _filter_valid(x * y, taps) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y, data_range: float = 1.0) -> float:
    """Mean local SSIM; (C, H, W) inputs are scored per channel and averaged."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise DimensionError("ssim expects (H, W) or (C, H, W) images")
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise DimensionError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    return float(np.mean([ssim_map(xc, yc, data_range).mean() for xc, yc in zip(x, y)]))


def area_metric(scores: Sequence[float], eta_min: float, eta_max: float) -> float:
    """Rectangle-rule area: (eta_max - eta_min) times the mean score."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or len(s) < 1:
        raise ValueError("need at least one score")
    return float((eta_max - eta_min) * s.mean())


@dataclass
class RobustnessCurve:
    family: str
    metric: str
    levels: list[float]
    scores: list[float]
    area: float = field(init=False)

    def __post_init__(self):
        if len(self.levels) != len(self.scores) or not self.levels:
            raise ValueError("levels and scores must be non-empty and equally long")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        self.area = area_metric(self.scores, self.levels[0], self.levels[-1])


Model = Callable[[np.ndarray], np.ndarray]


def robustness_curves(model: Model, clean: np.ndarray, schedule: Sequence[PerturbSpec],
                      rng: np.random.Generator) -> tuple[RobustnessCurve, RobustnessCurve]:
    """(MSE curve, SSIM curve) comparing outputs on perturbed inputs to outputs on clean inputs.

    ``model`` maps an (N, C, H, W) stack to an output stack.  Scores are
    averaged over images per level and then integrated over the level range.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim != 4 or len(clean) == 0:
        raise ValueError("need a non-empty (N, C, H, W) evaluation set")
    if not schedule:
        raise ValueError("empty schedule")
    ref = model(clean)
    mse_scores, ssim_scores = [], []
    for spec in schedule:
        noisy = np.stack([spec.apply(img, rng) for img in clean])
        out = model(noisy)
        mse_scores.append(float(np.mean([mse(o, r) for o, r in zip(out, ref)])))
        ssim_scores.append(float(np.mean([ssim(o, r) for o, r in zip(out, ref)])))
    family = schedule[0].family
    levels = [s.parameter for s in schedule]
    return (RobustnessCurve(family, "mse", levels, mse_scores),
            RobustnessCurve(family, "ssim", levels, ssim_scores))


def amse(model: Model, clean: np.ndarray, schedule: Sequence[PerturbSpec], rng: np.random.Generator) -> RobustnessCurve:
    return robustness_curves(model, clean, schedule, rng)[0]


def assim(model: Model, clean: np.ndarray, schedule: Sequence[PerturbSpec], rng: np.random.Generator) -> RobustnessCurve:
    return robustness_curves(model, clean, schedule, rng)[1]


def quantize_labels(image: np.ndarray, palette: Sequence[float]) -> np.ndarray:
    """Nearest palette entry index per pixel of a single-channel (H, W) or (1, H, W) image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img[0]
    pal = np.asarray(palette, dtype=np.float64)
    return np.abs(img[..., None] - pal).argmin(axis=-1)


def iou_and_accuracy(pred, gt, n_classes: int) -> tuple[float, float]:
    """(mean IoU, mean class accuracy) over the classes present in ``gt``."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if not (np.issubdtype(pred.dtype, np.integer) and np.issubdtype(gt.dtype, np.integer)):
        raise ValueError("label maps must be integer arrays")
    if min(pred.min(), gt.min()) < 0 or max(pred.max(), gt.max()) >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    conf = np.bincount(gt.ravel() * n_classes + pred.ravel(), minlength=n_classes ** 2).reshape(n_classes, n_classes)
    tp = np.diag(conf).astype(np.float64)
    gt_count = conf.sum(axis=1)
    pred_count = conf.sum(axis=0)
    present = gt_count > 0
    iou = tp[present] / (gt_count + pred_count - tp)[present]
    acc = tp[present] / gt_count[present]
    return float(iou.mean()), float(acc.mean())
