"""Deterministic DDIM sampling with reference classifier-free guidance.

Per step: eps_hat = eps_drop + scale * (eps_ref - eps_drop), where the
"unconditional" branch drops the reference stream entirely. After decoding,
pixels outside the mask are restored bitwise from the source image: only
masked regions are regenerated.
"""

from __future__ import annotations

import numpy as np
import torch

from ..imgcore import InvalidImageError, validate_image
from ..masker import apply_mask
from .codec import LATENT_CHANNELS, PATCH, decode_to_image, toy_encode
from .model import DualUNet
from .schedule import NoiseSchedule
from .train import downsample_mask


def cfg_sample(
    source: np.ndarray,
    mask: np.ndarray,
    reference: np.ndarray,
    depth: np.ndarray | None,
    scale: float,
    steps: int,
    rng_seed: int,
    model: DualUNet,
    schedule: NoiseSchedule | None = None,
) -> np.ndarray:
    """Regenerate the masked region of source, guided by reference."""
    if scale < 0:
        raise ValueError("guidance scale must be >= 0")
    src = validate_image(source)
    m = validate_image(mask)
    ref = validate_image(reference)
    h, w, _ = src.shape
    if h % PATCH or w % PATCH:
        raise InvalidImageError(f"source dims {h}x{w} not divisible by {PATCH}")
    if m.shape[:2] != src.shape[:2]:
        raise InvalidImageError("mask shape must match source")
    schedule = schedule or NoiseSchedule()

    background = toy_encode(apply_mask(src, m))
    mask_ch = downsample_mask(m)
    if depth is not None:
        d = validate_image(depth)
        dt = torch.from_numpy(d.transpose(2, 0, 1)).float()[None]
        with torch.no_grad():
            depth_latent = model.depth_projector(dt)[0]
    else:
        depth_latent = torch.zeros(LATENT_CHANNELS, background.shape[1], background.shape[2])
    ref_latent = toy_encode(ref)[None]

    gen = torch.Generator().manual_seed(rng_seed)
    x = torch.randn(background.shape, generator=gen)

    timesteps = schedule.ddim_steps(steps)
    with torch.no_grad():
        for i, t in enumerate(timesteps):
            stack = torch.cat([x, mask_ch, background, depth_latent], dim=0)[None]
            tt = torch.full((1,), t, dtype=torch.long)
            eps_drop = model(stack, None, tt)[0]
            if scale == 0.0:
                eps_hat = eps_drop
            elif scale == 1.0:
                eps_hat = model(stack, ref_latent, tt)[0]
            else:
                eps_ref = model(stack, ref_latent, tt)[0]
                eps_hat = eps_drop + scale * (eps_ref - eps_drop)
            ab = schedule.alpha_bars[t].float()
            x0 = (x - torch.sqrt(1.0 - ab) * eps_hat) / torch.sqrt(ab)
            # project the denoised estimate onto latents of valid [0,1]
            # images (the codec is orthonormal, so decode/clip/encode is a
            # projection); without this the early large-t estimates, where
            # the division above amplifies prediction error, can send the
            # trajectory far outside the data range
            x0 = toy_encode(decode_to_image(x0))
            eps_hat = (x - torch.sqrt(ab) * x0) / torch.sqrt(1.0 - ab)
            if i + 1 < len(timesteps):
                ab_prev = schedule.alpha_bars[timesteps[i + 1]].float()
                x = torch.sqrt(ab_prev) * x0 + torch.sqrt(1.0 - ab_prev) * eps_hat
            else:
                x = x0

    decoded = decode_to_image(x)
    keep = (m[:, :, 0] <= 0.5)[:, :, None]
    return np.where(keep, src, decoded).astype(np.float32)
