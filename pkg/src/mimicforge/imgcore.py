"""Shared image primitives: float rasters, padding, resizing, perspective warps.

An image is a float32 ndarray of shape (H, W, C) with C in {1, 3, 4} and
samples in [0, 1]. All operations are pure and use the half-pixel-center
sampling convention.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

VALID_CHANNELS = (1, 3, 4)

_TENSOR_MAGIC = b"IMGT"


class InvalidImageError(ValueError):
    pass


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check shape/dtype/range; returns the array (contiguous float32)."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in VALID_CHANNELS:
        raise InvalidImageError(f"expected (H, W, C) with C in {VALID_CHANNELS}, got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidImageError(f"zero-dimension image: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidImageError("non-finite samples")
    return np.ascontiguousarray(arr)


def to_gray(img: np.ndarray) -> np.ndarray:
    """Channel mean as a single-channel image."""
    arr = validate_image(img)
    if arr.shape[2] == 1:
        return arr
    return arr.mean(axis=2, keepdims=True).astype(np.float32)


@dataclass(frozen=True)
class PadRecord:
    """Offsets of the original content inside a padded square."""

    top: int
    left: int
    height: int
    width: int


def pad_to_square(img: np.ndarray, fill: float = 0.0) -> tuple[np.ndarray, PadRecord]:
    arr = validate_image(img)
    h, w, c = arr.shape
    side = max(h, w)
    top = (side - h) // 2
    left = (side - w) // 2
    out = np.full((side, side, c), np.float32(fill), dtype=np.float32)
    out[top:top + h, left:left + w] = arr
    return out, PadRecord(top=top, left=left, height=h, width=w)


def crop_padding(img: np.ndarray, rec: PadRecord) -> np.ndarray:
    """Inverse of pad_to_square."""
    arr = validate_image(img)
    return arr[rec.top:rec.top + rec.height, rec.left:rec.left + rec.width].copy()


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers; edge samples are clamped."""
    arr = validate_image(img)
    if new_h < 1 or new_w < 1:
        raise InvalidImageError(f"invalid target dims {new_h}x{new_w}")
    h, w, _ = arr.shape
    if (new_h, new_w) == (h, w):
        return arr.copy()
    ys = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    out = _bilinear_gather(arr.astype(np.float64), *np.meshgrid(xs, ys))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _bilinear_gather(arr: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Sample arr (H, W, C) at float coords (gx, gy), clamped at edges."""
    h, w, _ = arr.shape
    gx = np.clip(gx, 0.0, w - 1.0)
    gy = np.clip(gy, 0.0, h - 1.0)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (gx - x0)[..., None]
    fy = (gy - y0)[..., None]
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return top * (1 - fy) + bot * fy


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform, normalized so m[2][2] = 1."""

    m: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        mat = np.asarray(self.m, dtype=np.float64)
        if mat.shape != (3, 3):
            raise ValueError(f"expected 3x3 matrix, got {mat.shape}")
        det = np.linalg.det(mat)
        if abs(det) < 1e-9:
            raise ValueError("singular homography")
        if abs(mat[2, 2]) < 1e-12:
            raise ValueError("cannot normalize: m[2][2] ~ 0")
        object.__setattr__(self, "m", mat / mat[2, 2])

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = dx
        m[1, 2] = dy
        return cls(m)

    def invert(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def compose(self, other: "Homography") -> "Homography":
        """self after other: (self.compose(other)).apply(p) = self(other(p))."""
        return Homography(self.m @ other.m)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (N, 2) points (x, y) through the homography."""
        pts = np.asarray(pts, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        hp = np.hstack([pts, ones]) @ self.m.T
        return hp[:, :2] / hp[:, 2:3]

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.m - np.eye(3)) <= tol))


def solve_homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> Homography:
    """4-point (or more) direct linear transform: maps src_pts onto dst_pts."""
    src = np.asarray(src_pts, dtype=np.float64)
    dst = np.asarray(dst_pts, dtype=np.float64)
    if src.shape != dst.shape or src.shape[0] < 4 or src.shape[1] != 2:
        raise ValueError("need matching (N>=4, 2) point arrays")
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    a = np.asarray(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-9 * max(s[0], 1.0):
        raise ValueError("degenerate point configuration")
    h = vt[-1].reshape(3, 3)
    return Homography(h)


def warp_perspective(
    img: np.ndarray,
    h: Homography,
    out_h: int,
    out_w: int,
    border: float = 0.0,
) -> np.ndarray:
    """Inverse-mapping warp: out(p) = img(h^-1(p)), bilinear, constant border."""
    arr = validate_image(img)
    if out_h < 1 or out_w < 1:
        raise InvalidImageError(f"invalid output dims {out_h}x{out_w}")
    if h.is_identity() and (out_h, out_w) == arr.shape[:2]:
        return arr.copy()
    hinv = h.invert().m
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    denom = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    denom = np.where(np.abs(denom) < 1e-12, 1e-12, denom)
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / denom
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / denom
    ih, iw, _ = arr.shape
    inside = (sx >= 0) & (sx <= iw - 1) & (sy >= 0) & (sy <= ih - 1)
    out = _bilinear_gather(arr.astype(np.float64), sx, sy)
    out = np.where(inside[..., None], out, np.float64(border))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def load_png(path) -> np.ndarray:
    """8-bit PNG -> float image in [0, 1]."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16"):
            arr = np.asarray(im.convert("L"), dtype=np.float32)[:, :, None]
        elif im.mode == "RGBA":
            arr = np.asarray(im, dtype=np.float32)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return validate_image(arr / 255.0)


def save_png(path, img: np.ndarray) -> None:
    arr = validate_image(img)
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(q, mode="RGB" if q.shape[2] == 3 else "RGBA").save(path, format="PNG")


def write_tensor(path, img: np.ndarray) -> None:
    """Raw dump: 16-byte header (magic 'IMGT', u32 h, u32 w, u32 c) + LE f32 data."""
    arr = validate_image(img)
    h, w, c = arr.shape
    with open(path, "wb") as f:
        f.write(_TENSOR_MAGIC + struct.pack("<III", h, w, c))
        f.write(arr.astype("<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != _TENSOR_MAGIC:
            raise InvalidImageError(f"bad tensor header in {path}")
        h, w, c = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(h * w * c * 4), dtype="<f4")
    if data.size != h * w * c:
        raise InvalidImageError(f"truncated tensor file {path}")
    return validate_image(data.reshape(h, w, c))
