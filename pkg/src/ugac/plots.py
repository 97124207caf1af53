"""Small line and scatter charts rendered straight to PNG with Pillow."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw

WIDTH, HEIGHT = 480, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 32, 48
PALETTE = [(31, 119, 180), (214, 39, 40), (44, 160, 44), (148, 103, 189), (255, 127, 14)]


def _bounds(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return 0.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, xs: np.ndarray, ys: np.ndarray, title: str, xlabel: str, ylabel: str):
        self.img = Image.new("RGB", (WIDTH, HEIGHT), "white")
        self.draw = ImageDraw.Draw(self.img)
        self.x0, self.x1 = _bounds(xs)
        self.y0, self.y1 = _bounds(ys)
        d = self.draw
        left, top, right, bottom = MARGIN_L, MARGIN_T, WIDTH - MARGIN_R, HEIGHT - MARGIN_B
        d.rectangle([left, top, right, bottom], outline="black")
        d.text((left, 8), title, fill="black")
        d.text(((left + right) // 2 - 3 * len(xlabel), HEIGHT - 18), xlabel, fill="black")
        d.text((4, top - 14), ylabel, fill="black")
        for frac in (0.0, 0.5, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            px, py = self.px(xv, self.y0)
            d.line([px, bottom, px, bottom + 4], fill="black")
            d.text((px - 12, bottom + 6), f"{xv:.3g}", fill="black")
            px, py = self.px(self.x0, yv)
            d.line([left - 4, py, left, py], fill="black")
            d.text((4, py - 6), f"{yv:.3g}", fill="black")

    def px(self, x: float, y: float) -> tuple[float, float]:
        left, top, right, bottom = MARGIN_L, MARGIN_T, WIDTH - MARGIN_R, HEIGHT - MARGIN_B
        fx = (x - self.x0) / (self.x1 - self.x0)
        fy = (y - self.y0) / (self.y1 - self.y0)
        return left + fx * (right - left), bottom - fy * (bottom - top)

    def legend(self, names: Sequence[str]) -> None:
        for i, name in enumerate(names):
            y = MARGIN_T + 6 + 14 * i
            x = WIDTH - MARGIN_R - 110
            self.draw.rectangle([x, y + 2, x + 8, y + 10], fill=PALETTE[i % len(PALETTE)])
            self.draw.text((x + 12, y), name, fill="black")

    def save(self, path: str | Path) -> None:
        self.img.save(path, format="PNG")


def line_chart(path: str | Path, series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
               title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """One polyline with markers per named (xs, ys) series."""
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(v[0], dtype=float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], dtype=float) for v in series.values()])
    c = _Canvas(xs, ys, title, xlabel, ylabel)
    for i, (sx, sy) in enumerate(series.values()):
        colour = PALETTE[i % len(PALETTE)]
        pts = [c.px(x, y) for x, y in zip(sx, sy) if np.isfinite(y)]
        if len(pts) > 1:
            c.draw.line(pts, fill=colour, width=2)
        for x, y in pts:
            c.draw.ellipse([x - 3, y - 3, x + 3, y + 3], fill=colour)
    c.legend(list(series))
    c.save(path)


def scatter_chart(path: str | Path, xs: Sequence[float], ys: Sequence[float],
                  title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size == 0:
        raise ValueError("need equally long, non-empty coordinate lists")
    c = _Canvas(x, y, title, xlabel, ylabel)
    for xv, yv in zip(x, y):
        if np.isfinite(xv) and np.isfinite(yv):
            px, py = c.px(xv, yv)
            c.draw.ellipse([px - 3, py - 3, px + 3, py + 3], outline=PALETTE[0], fill=PALETTE[0])
    c.save(path)
