"""Source-image masking: feature-match-biased N x N grid masks and
segmentation-derived masks for pseudo pairs.

Cells holding matched keypoints are dropped with a higher probability than
the rest, so the model is forced to look at the reference for the
discriminative regions instead of repainting easy background.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import InvalidImageError, validate_image
from .matcher import KeypointMatchSet

GRID_MIN = 3
GRID_MAX = 10


@dataclass(frozen=True)
class MaskPolicy:
    p_matched: float = 0.75
    p_other: float = 0.5

    def __post_init__(self):
        if not (0 <= self.p_matched <= 1 and 0 <= self.p_other <= 1):
            raise ValueError("probabilities must be in [0,1]")


@dataclass
class GridMask:
    n: int
    cell_flags: np.ndarray  # (n, n) bool, True = masked
    rendered: np.ndarray  # (h, w, 1) binary image

    def to_sidecar(self) -> str:
        return json.dumps({"n": self.n, "cell_flags": self.cell_flags.astype(int).tolist()})


def _cell_edges(size: int, n: int) -> np.ndarray:
    """Cell boundaries; remainder pixels go to the last cell."""
    base = size // n
    edges = np.arange(n + 1) * base
    edges[-1] = size
    return edges


def render_grid(h: int, w: int, cell_flags: np.ndarray) -> np.ndarray:
    n = cell_flags.shape[0]
    ye = _cell_edges(h, n)
    xe = _cell_edges(w, n)
    out = np.zeros((h, w, 1), dtype=np.float32)
    for i in range(n):
        for j in range(n):
            if cell_flags[i, j]:
                out[ye[i]:ye[i + 1], xe[j]:xe[j + 1]] = 1.0
    return out


def grid_mask(
    h: int,
    w: int,
    matches: KeypointMatchSet,
    policy: MaskPolicy = MaskPolicy(),
    rng_seed: int = 0,
    n: int | None = None,
) -> GridMask:
    """Random grid mask; n uniform in [3,10] unless pinned. Cells containing
    a source-side matched keypoint drop with p_matched, others with p_other.
    Degenerate all/none draws are resampled (20 tries) then force-fixed."""
    if h < 10 or w < 10:
        raise InvalidImageError("grid masking needs h, w >= 10")
    rng = np.random.default_rng(rng_seed)
    if n is None:
        n = int(rng.integers(GRID_MIN, GRID_MAX + 1))
    elif not GRID_MIN <= n <= GRID_MAX:
        raise ValueError(f"n must be in [{GRID_MIN}, {GRID_MAX}]")

    ye = _cell_edges(h, n)
    xe = _cell_edges(w, n)
    has_match = np.zeros((n, n), dtype=bool)
    for sx, sy in matches.source_points():
        i = min(int(np.searchsorted(ye, sy, side="right")) - 1, n - 1)
        j = min(int(np.searchsorted(xe, sx, side="right")) - 1, n - 1)
        if 0 <= i < n and 0 <= j < n:
            has_match[i, j] = True
    thresholds = np.where(has_match, policy.p_matched, policy.p_other)

    flags = None
    for _ in range(20):
        draw = rng.random((n, n))
        cand = draw < thresholds
        if cand.any() and not cand.all():
            flags = cand
            break
    if flags is None:
        flags = rng.random((n, n)) < thresholds
        flat = int(rng.integers(0, n * n))
        flags.flat[flat] = not flags.flat[flat]

    return GridMask(n=n, cell_flags=flags, rendered=render_grid(h, w, flags))


def segmentation_mask(
    still_mask: np.ndarray,
    dilate_px: int | None = None,
    rng_seed: int = 0,
    max_dilate: int = 8,
) -> np.ndarray:
    """Object mask with seeded morphological dilation (4-connected). When
    dilate_px is None it is drawn uniformly from [0, max_dilate]."""
    m = validate_image(still_mask)
    if m.shape[2] != 1:
        raise InvalidImageError("segmentation mask must be single-channel")
    binary = m[:, :, 0] > 0.5
    if not binary.any():
        raise InvalidImageError("empty mask")
    if dilate_px is None:
        dilate_px = int(np.random.default_rng(rng_seed).integers(0, max_dilate + 1))
    if dilate_px < 0:
        raise ValueError("dilate_px must be >= 0")
    if dilate_px > 0:
        structure = ndimage.generate_binary_structure(2, 1)
        binary = ndimage.binary_dilation(binary, structure=structure, iterations=dilate_px)
    return binary.astype(np.float32)[:, :, None]


def apply_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out masked pixels in every channel."""
    arr = validate_image(img)
    m = validate_image(mask)
    if m.shape[2] != 1 or m.shape[:2] != arr.shape[:2]:
        raise InvalidImageError("mask must be single-channel and match the image")
    keep = (m[:, :, 0] <= 0.5)[:, :, None]
    return np.where(keep, arr, np.float32(0.0))
