"""Simplified SIFT: difference-of-Gaussians keypoints, 128-d gradient
histograms, and ratio-test matching.

Matches are only used downstream to bias grid-mask probabilities, so the
implementation favors recall and determinism over pose precision: fixed
3 octaves, 3 scales per octave, one quadratic refinement step, a single
orientation per keypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imgcore import InvalidImageError, to_gray

NUM_OCTAVES = 3
SCALES_PER_OCTAVE = 3
BASE_SIGMA = 1.6
ASSUMED_INPUT_SIGMA = 0.5
IMG_BORDER = 5
ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
DESCR_WIDTH = 4
DESCR_BINS = 8
DESCR_SCALE_FACTOR = 3.0
DESCR_MAG_CLAMP = 0.2


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float  # radians in [0, 2*pi)


@dataclass(frozen=True)
class Descriptor:
    v: np.ndarray  # 128 floats, L2-normalized, clamped at 0.2, renormalized


@dataclass
class KeypointMatchSet:
    """(source keypoint, reference keypoint, descriptor distance) triples;
    each source keypoint appears at most once."""

    matches: list[tuple[Keypoint, Keypoint, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.matches)

    def source_points(self) -> np.ndarray:
        if not self.matches:
            return np.zeros((0, 2))
        return np.array([[m[0].x, m[0].y] for m in self.matches])

    def reference_points(self) -> np.ndarray:
        if not self.matches:
            return np.zeros((0, 2))
        return np.array([[m[1].x, m[1].y] for m in self.matches])


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    return ndimage.gaussian_filter(img, sigma, mode="nearest")


def _build_pyramids(gray: np.ndarray):
    """Per-octave Gaussian stacks (s+3 levels) and their DoG stacks."""
    k = 2.0 ** (1.0 / SCALES_PER_OCTAVE)
    sigmas = [BASE_SIGMA * k**i for i in range(SCALES_PER_OCTAVE + 3)]
    base = _gaussian_blur(gray, math.sqrt(max(BASE_SIGMA**2 - ASSUMED_INPUT_SIGMA**2, 0.01)))
    gaussians, dogs = [], []
    octave_base = base
    for _ in range(NUM_OCTAVES):
        stack = [octave_base]
        for i in range(1, len(sigmas)):
            inc = math.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
            stack.append(_gaussian_blur(stack[-1], inc))
        gaussians.append(stack)
        dogs.append(np.stack([stack[i + 1] - stack[i] for i in range(len(stack) - 1)]))
        octave_base = stack[SCALES_PER_OCTAVE][::2, ::2]
        if min(octave_base.shape) < 2 * IMG_BORDER + 3:
            break
    return gaussians, dogs


def _find_extrema(dog: np.ndarray, contrast_threshold: float):
    """(level, y, x) indices of 26-neighborhood extrema in a DoG stack."""
    maxf = ndimage.maximum_filter(dog, size=3, mode="nearest")
    minf = ndimage.minimum_filter(dog, size=3, mode="nearest")
    thr = 0.5 * contrast_threshold / SCALES_PER_OCTAVE
    cand = ((dog == maxf) | (dog == minf)) & (np.abs(dog) > thr)
    cand[0] = cand[-1] = False
    cand[:, :IMG_BORDER] = cand[:, -IMG_BORDER:] = False
    cand[:, :, :IMG_BORDER] = cand[:, :, -IMG_BORDER:] = False
    return np.argwhere(cand)


def _refine(dog: np.ndarray, lv: int, y: int, x: int, contrast_threshold: float, edge_ratio: float):
    """One quadratic-fit step; returns (dy, dx, dlv, value) or None."""
    d = dog
    grad = np.array(
        [
            (d[lv, y, x + 1] - d[lv, y, x - 1]) / 2,
            (d[lv, y + 1, x] - d[lv, y - 1, x]) / 2,
            (d[lv + 1, y, x] - d[lv - 1, y, x]) / 2,
        ]
    )
    dxx = d[lv, y, x + 1] - 2 * d[lv, y, x] + d[lv, y, x - 1]
    dyy = d[lv, y + 1, x] - 2 * d[lv, y, x] + d[lv, y - 1, x]
    dss = d[lv + 1, y, x] - 2 * d[lv, y, x] + d[lv - 1, y, x]
    dxy = (d[lv, y + 1, x + 1] - d[lv, y + 1, x - 1] - d[lv, y - 1, x + 1] + d[lv, y - 1, x - 1]) / 4
    dxs = (d[lv + 1, y, x + 1] - d[lv + 1, y, x - 1] - d[lv - 1, y, x + 1] + d[lv - 1, y, x - 1]) / 4
    dys = (d[lv + 1, y + 1, x] - d[lv + 1, y - 1, x] - d[lv - 1, y + 1, x] + d[lv - 1, y - 1, x]) / 4
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    try:
        offset = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.abs(offset) > 1.0):
        return None
    value = d[lv, y, x] + 0.5 * grad @ offset
    if abs(value) * SCALES_PER_OCTAVE < contrast_threshold:
        return None
    # principal-curvature (edge) rejection on the spatial 2x2 Hessian
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0 or tr**2 * edge_ratio >= (edge_ratio + 1) ** 2 * det:
        return None
    return offset[1], offset[0], offset[2], value


def _orientation(gimg: np.ndarray, x: float, y: float, sigma_oct: float) -> float | None:
    h, w = gimg.shape
    radius = int(round(ORI_RADIUS_FACTOR * ORI_SIGMA_FACTOR * sigma_oct))
    cy, cx = int(round(y)), int(round(x))
    y0, y1 = max(cy - radius, 1), min(cy + radius + 1, h - 1)
    x0, x1 = max(cx - radius, 1), min(cx + radius + 1, w - 1)
    if y1 - y0 < 1 or x1 - x0 < 1:
        return None
    dx = (gimg[y0:y1, x0 + 1:x1 + 1] - gimg[y0:y1, x0 - 1:x1 - 1]) / 2
    dy = (gimg[y0 + 1:y1 + 1, x0:x1] - gimg[y0 - 1:y1 - 1, x0:x1]) / 2
    mag = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx) % (2 * np.pi)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    wgt = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2 * (ORI_SIGMA_FACTOR * sigma_oct) ** 2))
    bins = np.floor(ang / (2 * np.pi) * ORI_BINS).astype(int) % ORI_BINS
    hist = np.bincount(bins.ravel(), weights=(mag * wgt).ravel(), minlength=ORI_BINS)
    # light smoothing keeps the peak stable under pixel noise
    hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3
    if hist.max() <= 0:
        return None
    peak = int(np.argmax(hist))
    left = hist[(peak - 1) % ORI_BINS]
    right = hist[(peak + 1) % ORI_BINS]
    denom = left - 2 * hist[peak] + right
    shift = 0.0 if denom == 0 else 0.5 * (left - right) / denom
    return ((peak + 0.5 + shift) / ORI_BINS * 2 * np.pi) % (2 * np.pi)


def _descriptor(gimg: np.ndarray, x: float, y: float, sigma_oct: float, theta: float) -> np.ndarray | None:
    h, w = gimg.shape
    hist_width = DESCR_SCALE_FACTOR * sigma_oct
    radius = int(round(hist_width * math.sqrt(2) * (DESCR_WIDTH + 1) * 0.5))
    radius = min(radius, int(math.hypot(h, w)))
    cy, cx = int(round(y)), int(round(x))
    y0, y1 = max(cy - radius, 1), min(cy + radius + 1, h - 1)
    x0, x1 = max(cx - radius, 1), min(cx + radius + 1, w - 1)
    if y1 - y0 < 2 or x1 - x0 < 2:
        return None
    dxg = (gimg[y0:y1, x0 + 1:x1 + 1] - gimg[y0:y1, x0 - 1:x1 - 1]) / 2
    dyg = (gimg[y0 + 1:y1 + 1, x0:x1] - gimg[y0 - 1:y1 - 1, x0:x1]) / 2
    mag = np.hypot(dxg, dyg).ravel()
    ang = (np.arctan2(dyg, dxg) - theta) % (2 * np.pi)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    ry = (yy - y).ravel()
    rx = (xx - x).ravel()
    ct, st = math.cos(theta), math.sin(theta)
    # rotate offsets into the keypoint frame, in units of histogram cells
    u = (ct * rx + st * ry) / hist_width + DESCR_WIDTH / 2 - 0.5
    v = (-st * rx + ct * ry) / hist_width + DESCR_WIDTH / 2 - 0.5
    keep = (u > -1) & (u < DESCR_WIDTH) & (v > -1) & (v < DESCR_WIDTH)
    if not keep.any():
        return None
    u, v, mag = u[keep], v[keep], mag[keep]
    ob = (ang.ravel()[keep] / (2 * np.pi) * DESCR_BINS) % DESCR_BINS
    wgt = np.exp(-(((u - DESCR_WIDTH / 2 + 0.5) ** 2 + (v - DESCR_WIDTH / 2 + 0.5) ** 2))
                 / (0.5 * DESCR_WIDTH**2))
    hist = np.zeros((DESCR_WIDTH + 2, DESCR_WIDTH + 2, DESCR_BINS))
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    o0 = np.floor(ob).astype(int)
    fu, fv, fo = u - u0, v - v0, ob - o0
    contrib = mag * wgt
    for du, wu in ((0, 1 - fu), (1, fu)):
        for dv, wv in ((0, 1 - fv), (1, fv)):
            for do, wo in ((0, 1 - fo), (1, fo)):
                np.add.at(
                    hist,
                    (v0 + dv + 1, u0 + du + 1, (o0 + do) % DESCR_BINS),
                    contrib * wu * wv * wo,
                )
    vec = hist[1:-1, 1:-1].ravel()
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec = np.minimum(vec / norm, DESCR_MAG_CLAMP)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    return (vec / norm).astype(np.float64)


def detect_and_describe(
    img: np.ndarray,
    contrast_threshold: float = 0.03,
    edge_ratio: float = 10.0,
) -> list[tuple[Keypoint, Descriptor]]:
    """DoG keypoints with 4x4x8 gradient-histogram descriptors, sorted by
    (y, x, scale) for deterministic output."""
    gray = to_gray(img)[:, :, 0].astype(np.float64)
    if min(gray.shape) < 16:
        raise InvalidImageError(f"image too small for detection: {gray.shape}")
    gaussians, dogs = _build_pyramids(gray)
    k = 2.0 ** (1.0 / SCALES_PER_OCTAVE)
    results = []
    for octave, dog in enumerate(dogs):
        oct_scale = 2.0**octave
        for lv, y, x in _find_extrema(dog, contrast_threshold):
            ref = _refine(dog, lv, y, x, contrast_threshold, edge_ratio)
            if ref is None:
                continue
            dy, dx, dlv, _ = ref
            fy, fx = y + dy, x + dx
            level = np.clip(lv + dlv, 0, SCALES_PER_OCTAVE + 1)
            sigma_oct = BASE_SIGMA * k**level
            gimg = gaussians[octave][lv]
            theta = _orientation(gimg, fx, fy, sigma_oct)
            if theta is None:
                continue
            desc = _descriptor(gimg, fx, fy, sigma_oct, theta)
            if desc is None:
                continue
            kp = Keypoint(
                x=float(fx * oct_scale),
                y=float(fy * oct_scale),
                scale=float(sigma_oct * oct_scale),
                orientation=float(theta),
            )
            if 0 <= kp.x < gray.shape[1] and 0 <= kp.y < gray.shape[0]:
                results.append((kp, Descriptor(desc)))
    results.sort(key=lambda kd: (kd[0].y, kd[0].x, kd[0].scale))
    return results


def match_ratio_test(
    src: list[tuple[Keypoint, Descriptor]],
    ref: list[tuple[Keypoint, Descriptor]],
    ratio: float = 0.8,
) -> KeypointMatchSet:
    """Lowe ratio test: keep a source keypoint's nearest reference match iff
    d1/d2 < ratio."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    if len(src) == 0 or len(ref) < 2:
        return KeypointMatchSet()
    sd = np.stack([d.v for _, d in src])
    rd = np.stack([d.v for _, d in ref])
    sq = np.sum(sd**2, axis=1)[:, None] + np.sum(rd**2, axis=1)[None, :] - 2 * sd @ rd.T
    dist = np.sqrt(np.maximum(sq, 0.0))
    order = np.argsort(dist, axis=1, kind="stable")
    matches = []
    for i in range(len(src)):
        j1, j2 = order[i, 0], order[i, 1]
        # recompute the winning distance directly: the quadratic-form route
        # leaves ~1e-8 residue even for identical descriptors
        d1 = float(np.linalg.norm(sd[i] - rd[j1]))
        d2 = dist[i, j2]
        if d1 == 0.0 or d1 < ratio * d2:
            matches.append((src[i][0], ref[j1][0], d1))
    return KeypointMatchSet(matches)


def dump_matches(path, ms: KeypointMatchSet) -> None:
    """JSON-lines dump for visualization: {sx, sy, rx, ry, dist}."""
    import json

    with open(path, "w") as f:
        for s, r, d in ms.matches:
            f.write(json.dumps({"sx": s.x, "sy": s.y, "rx": r.x, "ry": r.y, "dist": d}) + "\n")
