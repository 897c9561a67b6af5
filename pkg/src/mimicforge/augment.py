"""Strong augmentation for source/reference pairs: color jitter, flips,
rotation, rescale, and random projective warps.

Color ops run before geometric ops so their statistics are computed on the
unwarped image (border fill would otherwise skew means). Geometric ops are
composed into a single homography and resampled once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .imgcore import Homography, solve_homography, validate_image, warp_perspective

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentConfig:
    brightness_delta: float = 0.0
    contrast_range: tuple[float, float] = (1.0, 1.0)
    saturation_range: tuple[float, float] = (1.0, 1.0)
    hflip_prob: float = 0.0
    vflip_prob: float = 0.0
    rotation_max: float = 0.0  # degrees
    scale_range: tuple[float, float] = (1.0, 1.0)
    projective_jitter: float = 0.0  # max corner displacement / image side

    def __post_init__(self):
        for p in (self.hflip_prob, self.vflip_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("flip probabilities must be in [0,1]")
        for lo, hi in (self.contrast_range, self.saturation_range, self.scale_range):
            if lo > hi:
                raise ValueError("ranges must be well-ordered")
        if not 0.0 <= self.projective_jitter < 0.5:
            raise ValueError("projective_jitter must be in [0, 0.5)")

    @classmethod
    def strong(cls) -> "AugmentConfig":
        """Aggressive preset used for pseudo-frame construction."""
        return cls(
            brightness_delta=0.3,
            contrast_range=(0.6, 1.4),
            saturation_range=(0.6, 1.4),
            hflip_prob=0.5,
            vflip_prob=0.1,
            rotation_max=30.0,
            scale_range=(0.7, 1.3),
            projective_jitter=0.15,
        )

    def is_identity(self) -> bool:
        return (
            self.brightness_delta == 0.0
            and self.contrast_range == (1.0, 1.0)
            and self.saturation_range == (1.0, 1.0)
            and self.hflip_prob == 0.0
            and self.vflip_prob == 0.0
            and self.rotation_max == 0.0
            and self.scale_range == (1.0, 1.0)
            and self.projective_jitter == 0.0
        )


def sample_projective(jitter: float, h: int, w: int, rng_seed: int) -> Homography:
    """Random homography from independently displaced image corners (4-point
    DLT). Degenerate corner sets are resampled up to 10 times."""
    if not 0.0 <= jitter < 0.5:
        raise ValueError("jitter must be in [0, 0.5)")
    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
    if jitter == 0.0:
        return Homography.identity()
    rng = np.random.default_rng(rng_seed)
    side = min(h, w)
    for _ in range(10):
        disp = corners + rng.uniform(-jitter * side, jitter * side, size=(4, 2))
        try:
            return solve_homography(corners, disp)
        except ValueError:
            continue
    logger.warning("projective sampling degenerate 10 times; falling back to identity")
    return Homography.identity()


def apply_color_jitter(img: np.ndarray, cfg: AugmentConfig, rng_seed: int) -> np.ndarray:
    """Brightness (additive), contrast (scale about the image mean), then
    saturation (blend with gray); clamped to [0,1]."""
    arr = validate_image(img)
    if arr.shape[2] != 3:
        raise ValueError("color jitter expects a 3-channel image")
    rng = np.random.default_rng(rng_seed)
    out = arr.astype(np.float64)

    delta = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta) if cfg.brightness_delta else 0.0
    out = out + delta

    lo, hi = cfg.contrast_range
    factor = rng.uniform(lo, hi) if (lo, hi) != (1.0, 1.0) else 1.0
    mean = out.mean()
    out = mean + (out - mean) * factor

    lo, hi = cfg.saturation_range
    sat = rng.uniform(lo, hi) if (lo, hi) != (1.0, 1.0) else 1.0
    gray = out.mean(axis=2, keepdims=True)
    out = gray + (out - gray) * sat

    if cfg.is_identity():
        return arr.copy()
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _center_similarity(h: int, w: int, angle_rad: float, scale: float) -> Homography:
    """Rotation+scale about the image center as a homography."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    m = np.array(
        [
            [scale * c, -scale * s, cx - scale * (c * cx - s * cy)],
            [scale * s, scale * c, cy - scale * (s * cx + c * cy)],
            [0, 0, 1],
        ]
    )
    return Homography(m)


def apply_full_augmentation(img: np.ndarray, cfg: AugmentConfig, rng_seed: int) -> np.ndarray:
    """color jitter -> flips -> rotation -> scale -> projective warp, all from
    one seeded stream; output shape equals input shape."""
    arr = validate_image(img)
    if arr.shape[2] != 3:
        raise ValueError("full augmentation expects a 3-channel image")
    rng = np.random.default_rng(rng_seed)
    h, w, _ = arr.shape

    out = apply_color_jitter(arr, cfg, int(rng.integers(0, 2**31)))
    if rng.random() < cfg.hflip_prob:
        out = out[:, ::-1].copy()
    if rng.random() < cfg.vflip_prob:
        out = out[::-1].copy()

    angle = math.radians(rng.uniform(-cfg.rotation_max, cfg.rotation_max)) if cfg.rotation_max else 0.0
    lo, hi = cfg.scale_range
    scale = rng.uniform(lo, hi) if (lo, hi) != (1.0, 1.0) else 1.0
    proj = sample_projective(cfg.projective_jitter, h, w, int(rng.integers(0, 2**31)))
    geom = proj.compose(_center_similarity(h, w, 0.0, scale)).compose(_center_similarity(h, w, angle, 1.0))
    if not geom.is_identity(tol=1e-12):
        out = warp_perspective(out, geom, h, w)
    return out
