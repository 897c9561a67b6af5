"""Fixed orthonormal patch codec standing in for a pretrained autoencoder.

Each 8x8 gray patch maps to 4 coefficients: the patch mean plus the three
lowest 2-D DCT modes. The basis is orthonormal, so decoding then encoding
is the exact identity on latents, and encoding then decoding is the
low-frequency projection of the image.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from ..imgcore import InvalidImageError, to_gray, validate_image

PATCH = 8
LATENT_CHANNELS = 4


def _dct_vector(mode: int) -> np.ndarray:
    # orthonormal DCT-II row of length PATCH
    n = np.arange(PATCH)
    if mode == 0:
        return np.full(PATCH, 1.0 / math.sqrt(PATCH))
    return math.sqrt(2.0 / PATCH) * np.cos(math.pi * mode * (2 * n + 1) / (2 * PATCH))


def _build_basis() -> np.ndarray:
    """(4, 8, 8) orthonormal basis: modes (0,0), (0,1), (1,0), (1,1)."""
    modes = [(0, 0), (0, 1), (1, 0), (1, 1)]
    return np.stack([np.outer(_dct_vector(my), _dct_vector(mx)) for my, mx in modes])


_BASIS = _build_basis()  # (4, PATCH, PATCH), rows orthonormal in R^64


def toy_encode(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Image -> latent tensor (4, H/8, W/8)."""
    arr = validate_image(img)
    h, w, _ = arr.shape
    if h % PATCH or w % PATCH:
        raise InvalidImageError(f"image dims {h}x{w} not divisible by {PATCH}")
    gray = to_gray(arr)[:, :, 0].astype(np.float64)
    patches = gray.reshape(h // PATCH, PATCH, w // PATCH, PATCH).transpose(0, 2, 1, 3)
    coeffs = np.einsum("hwyx,cyx->chw", patches, _BASIS)
    return torch.from_numpy(np.ascontiguousarray(coeffs)).to(dtype)


def toy_decode(lat: torch.Tensor) -> np.ndarray:
    """Latent (4, h, w) -> 3-channel float image (8h, 8w, 3).

    Values are the raw low-frequency reconstruction and may leave [0, 1];
    clip before display. toy_encode(toy_decode(z)) == z by orthonormality.
    """
    if lat.ndim != 3 or lat.shape[0] != LATENT_CHANNELS:
        raise InvalidImageError(f"expected (4, h, w) latent, got {tuple(lat.shape)}")
    coeffs = lat.detach().cpu().double().numpy()
    gray = np.einsum("chw,cyx->hwyx", coeffs, _BASIS)
    h, w = coeffs.shape[1] * PATCH, coeffs.shape[2] * PATCH
    gray = gray.transpose(0, 2, 1, 3).reshape(h, w)
    return np.repeat(gray[:, :, None], 3, axis=2).astype(np.float32)


def decode_to_image(lat: torch.Tensor) -> np.ndarray:
    """Clipped decode for display/serialization."""
    return np.clip(toy_decode(lat), 0.0, 1.0).astype(np.float32)
