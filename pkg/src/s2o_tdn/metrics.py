"""MSE, PSNR and SSIM on images in [0, 1].

Model outputs live in [-1, 1]; :func:`to_unit` is the one place they are
mapped to [0, 1] before any metric is computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

PSNR_CAP = 99.0


def to_unit(x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def _pair(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, no padding
    n = len(g)
    h, w = img.shape
    rows = sum(g[k] * img[k : h - n + 1 + k, :] for k in range(n))
    return sum(g[k] * rows[:, k : w - n + 1 + k] for k in range(n))


def luminance(x: np.ndarray) -> np.ndarray:
    """Channel mean of a (C, H, W) image; 2-D input passes through."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x.mean(axis=0)
    if x.ndim == 2:
        return x
    raise DimensionError(f"expected (H, W) or (C, H, W), got {x.shape}")


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully-contained Gaussian windows, on luminance."""
    a, b = _pair(a, b)
    a, b = luminance(a), luminance(b)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} SSIM window")
    g = gaussian_window(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    ids: list = field(default_factory=list)
    mse: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)

    def add(self, pair_id: str, pred01, target01) -> None:
        self.ids.append(pair_id)
        self.mse.append(mse(pred01, target01))
        self.psnr.append(psnr(pred01, target01))
        self.ssim.append(ssim(pred01, target01))

    @property
    def n(self) -> int:
        return len(self.ids)

    def mean(self) -> dict:
        if not self.ids:
            return {"mse": float("nan"), "psnr": float("nan"), "ssim": float("nan")}
        return {"mse": float(np.mean(self.mse)), "psnr": float(np.mean(self.psnr)), "ssim": float(np.mean(self.ssim))}


def score_images(pred, target) -> dict:
    """Metrics for one image pair given in model range [-1, 1]."""
    p, t = to_unit(pred), to_unit(target)
    return {"mse": mse(p, t), "psnr": psnr(p, t), "ssim": ssim(p, t)}


def format_table(rows: list[dict], columns=("split", "n", "mse", "psnr", "ssim")) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    out = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    out += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(out)
