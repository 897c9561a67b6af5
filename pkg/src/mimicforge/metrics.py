"""Image similarity metrics: SSIM, PSNR, masked-region crops, cosine similarity.

SSIM drives training-pair selection; SSIM/PSNR plus externally supplied
embedding scores drive benchmark evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .imgcore import InvalidImageError, resize_bilinear, to_gray, validate_image


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    sigma: float = 1.5  # gaussian window width; the common reference convention

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1, k2 must be positive")


@dataclass
class MetricReport:
    ssim: float | None = None
    psnr: float | None = None
    embed_scores: dict[str, float] = field(default_factory=dict)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Mean local SSIM over Gaussian-weighted sliding windows; in [-1, 1]."""
    ga = to_gray(a)[:, :, 0].astype(np.float64)
    gb = to_gray(b)[:, :, 0].astype(np.float64)
    if ga.shape != gb.shape:
        raise InvalidImageError(f"shape mismatch {ga.shape} vs {gb.shape}")
    if min(ga.shape) < p.window:
        raise InvalidImageError(f"image smaller than SSIM window {p.window}")
    win = _gaussian_window(p.window, p.sigma)
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a = filt(ga)
    mu_b = filt(gb)
    var_a = filt(ga * ga) - mu_a**2
    var_b = filt(gb * gb) - mu_b**2
    cov = filt(ga * gb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_downsampled(a: np.ndarray, b: np.ndarray, size: int = 64) -> float:
    """Pair-selection indicator: SSIM at a fixed gray downsample for speed."""
    ga = resize_bilinear(to_gray(a), size, size)
    gb = resize_bilinear(to_gray(b), size, size)
    return ssim(ga, gb)


def psnr(a: np.ndarray, b: np.ndarray, dynamic_range: float = 1.0) -> float:
    """10*log10(range^2 / MSE); identical images return +inf."""
    aa = validate_image(a).astype(np.float64)
    bb = validate_image(b).astype(np.float64)
    if aa.shape != bb.shape:
        raise InvalidImageError(f"shape mismatch {aa.shape} vs {bb.shape}")
    mse = float(np.mean((aa - bb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(dynamic_range**2 / mse)


def masked_crop(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Tight bounding-box crop of the mask's positive region; out-of-mask
    pixels inside the box are zeroed."""
    arr = validate_image(img)
    m = validate_image(mask)
    if m.shape[2] != 1:
        raise InvalidImageError("mask must be single-channel")
    if m.shape[:2] != arr.shape[:2]:
        raise InvalidImageError(f"mask shape {m.shape[:2]} != image {arr.shape[:2]}")
    binary = m[:, :, 0] > 0.5
    if not binary.any():
        raise InvalidImageError("empty mask")
    ys, xs = np.nonzero(binary)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    crop = arr[y0:y1, x0:x1].copy()
    crop[~binary[y0:y1, x0:x1]] = 0.0
    return crop


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    uu = np.asarray(u, dtype=np.float64).ravel()
    vv = np.asarray(v, dtype=np.float64).ravel()
    if uu.size == 0 or uu.size != vv.size:
        raise ValueError(f"length mismatch: {uu.size} vs {vv.size}")
    sq = np.dot(uu, uu) * np.dot(vv, vv)
    if sq == 0.0:
        raise ValueError("zero-norm vector")
    return float(np.clip(np.dot(uu, vv) / np.sqrt(sq), -1.0, 1.0))


def write_scores(path, lines: list[dict]) -> None:
    """Score-file format: one JSON object per line {id, metric, value}."""
    with open(path, "w") as f:
        for line in lines:
            f.write(json.dumps({"id": line["id"], "metric": line["metric"], "value": line["value"]}) + "\n")


def read_scores(path) -> list[dict]:
    out = []
    with open(path) as f:
        for raw in f:
            raw = raw.strip()
            if not raw:
                continue
            obj = json.loads(raw)
            if not {"id", "metric", "value"} <= obj.keys():
                raise ValueError(f"malformed score line: {raw}")
            out.append(obj)
    return out
