"""Synthetic moving-shape videos for desk-scale experiments.

Each video is a textured background plus one colored shape that translates
and rotates between frames. Per-video randomness (texture, shape kind,
intensity, trajectory) means the masked content cannot be guessed from
other videos: a model has to read it off the reference frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import Homography, warp_perspective


@dataclass
class ShapeVideo:
    frames: list[np.ndarray]
    shape_masks: list[np.ndarray]  # binary single-channel mask per frame
    video_id: str


def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.random((size, size, 3)).astype(np.float64)
    smooth = ndimage.gaussian_filter(base, sigma=(3, 3, 0), mode="wrap")
    lo, hi = smooth.min(), smooth.max()
    return (0.15 + 0.5 * (smooth - lo) / max(hi - lo, 1e-9)).astype(np.float32)


def _shape_mask(kind: str, size: int, cx: float, cy: float, radius: float, angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(angle), np.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    if kind == "circle":
        inside = dx**2 + dy**2 <= radius**2
    elif kind == "square":
        inside = (np.abs(u) <= radius) & (np.abs(v) <= radius)
    else:  # triangle
        inside = (v >= -radius / 2) & (v + 2 * np.abs(u) <= radius)
    return inside.astype(np.float32)[:, :, None]


def make_shape_video(
    rng_seed: int,
    size: int = 32,
    n_frames: int = 4,
    video_id: str = "",
) -> ShapeVideo:
    """Background texture + one moving/rotating shape of a per-video color."""
    rng = np.random.default_rng(rng_seed)
    bg = _textured_background(rng, size)
    kind = ("circle", "square", "triangle")[int(rng.integers(0, 3))]
    color = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
    # keep the shape visibly distinct from the mid-gray background band
    gray = color.mean()
    if 0.25 < gray < 0.55:
        color = np.clip(color + (0.45 if rng.random() < 0.5 else -0.35), 0.0, 1.0).astype(np.float32)
    radius = float(rng.uniform(size * 0.14, size * 0.22))
    cx = float(rng.uniform(size * 0.3, size * 0.7))
    cy = float(rng.uniform(size * 0.3, size * 0.7))
    angle = float(rng.uniform(0, 2 * np.pi))
    step_dx = float(rng.uniform(-size * 0.08, size * 0.08))
    step_dy = float(rng.uniform(-size * 0.08, size * 0.08))
    step_rot = float(rng.uniform(-0.5, 0.5))
    drift = Homography.translation(float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)))

    frames, masks = [], []
    for i in range(n_frames):
        frame_bg = bg if i == 0 else warp_perspective(bg, drift, size, size, border=0.3)
        m = _shape_mask(kind, size, cx + i * step_dx, cy + i * step_dy, radius, angle + i * step_rot)
        frame = np.where(m > 0.5, color[None, None, :], frame_bg).astype(np.float32)
        frames.append(frame)
        masks.append(m)
    return ShapeVideo(frames=frames, shape_masks=masks, video_id=video_id)


def nearest_patch_oracle(
    source: np.ndarray,
    mask: np.ndarray,
    reference: np.ndarray,
    patch: int = 8,
    context: int = 2,
) -> np.ndarray:
    """Brute-force inpainting baseline: for every masked patch, scan the
    reference for the patch whose surrounding ring best matches the visible
    context around the hole, and copy its center.

    Used to confirm a synthetic task is solvable from the reference before
    asking a learned model to solve it.
    """
    src = source.copy()
    h, w, _ = src.shape
    m = mask[:, :, 0] > 0.5
    out = src.copy()
    ref = reference
    for y0 in range(0, h - h % patch, patch):
        for x0 in range(0, w - w % patch, patch):
            hole = m[y0:y0 + patch, x0:x0 + patch]
            if not hole.any():
                continue
            cy0, cy1 = max(y0 - context, 0), min(y0 + patch + context, h)
            cx0, cx1 = max(x0 - context, 0), min(x0 + patch + context, w)
            ctx_mask = ~m[cy0:cy1, cx0:cx1]
            ctx_img = src[cy0:cy1, cx0:cx1]
            best, best_cost = None, np.inf
            for ry in range(0, h - (cy1 - cy0) + 1):
                for rx in range(0, w - (cx1 - cx0) + 1):
                    cand = ref[ry:ry + (cy1 - cy0), rx:rx + (cx1 - cx0)]
                    if ctx_mask.any():
                        cost = float(np.mean(((cand - ctx_img) ** 2)[ctx_mask]))
                    else:
                        cost = float(np.mean((cand - ctx_img) ** 2))
                    if cost < best_cost:
                        best_cost, best = cost, (ry, rx)
            ry, rx = best
            fill = ref[ry + (y0 - cy0):ry + (y0 - cy0) + patch, rx + (x0 - cx0):rx + (x0 - cx0) + patch]
            block = out[y0:y0 + patch, x0:x0 + patch]
            block[hole] = fill[hole]
    return out
