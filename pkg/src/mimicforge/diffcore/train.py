"""Condition assembly and the training loop.

The imitative U-Net input is a fixed-order 13-channel stack:
[noisy latent (4) | downsampled mask (1) | background latent (4) |
depth latent (4)]. Depth and reference conditioning are independently
dropped during training so both can act as optional controls at inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..imgcore import InvalidImageError, validate_image
from ..masker import apply_mask
from .codec import LATENT_CHANNELS, PATCH, toy_encode
from .model import DualUNet
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    batch: int = 4
    ref_dropout_prob: float = 0.1
    depth_dropout_prob: float = 0.5
    guidance_scale: float = 5.0
    steps: int = 1000
    seed: int = 0
    widths: tuple[int, int, int] = (32, 64, 128)
    schedule_T: int = 1000
    sample_steps: int = 50
    log_interval: int = 100

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        for p in (self.ref_dropout_prob, self.depth_dropout_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("dropout probabilities must be in [0,1]")


@dataclass
class ConditionStack:
    noisy_latent: torch.Tensor  # (4, h, w)
    mask_ch: torch.Tensor  # (1, h, w)
    background_latent: torch.Tensor  # (4, h, w)
    depth_latent: torch.Tensor  # (4, h, w)
    depth_dropped: bool
    reference_dropped: bool = False
    # training targets, not part of the 13-channel contract
    noise: torch.Tensor | None = None
    clean_latent: torch.Tensor | None = None

    def concat(self) -> torch.Tensor:
        stack = torch.cat([self.noisy_latent, self.mask_ch, self.background_latent, self.depth_latent], dim=0)
        assert stack.shape[0] == 13
        return stack


@dataclass
class TrainingSample:
    source: np.ndarray
    reference: np.ndarray
    mask: np.ndarray  # binary single-channel, source-sized
    depth: np.ndarray | None = None


def downsample_mask(mask: np.ndarray) -> torch.Tensor:
    """Nearest-neighbor reduction of a binary mask to the latent grid."""
    m = validate_image(mask)
    if m.shape[2] != 1:
        raise InvalidImageError("mask must be single-channel")
    h, w, _ = m.shape
    if h % PATCH or w % PATCH:
        raise InvalidImageError(f"mask dims {h}x{w} not divisible by {PATCH}")
    # sample each 8x8 cell at its center (nearest-neighbor convention)
    ds = m[PATCH // 2::PATCH, PATCH // 2::PATCH, 0]
    return torch.from_numpy((ds > 0.5).astype(np.float32))[None, :, :]


def assemble_conditions(
    source: np.ndarray,
    mask: np.ndarray,
    depth: np.ndarray | None,
    t: int,
    rng_seed: int,
    cfg: TrainConfig,
    schedule: NoiseSchedule,
    depth_projector=None,
    dtype: torch.dtype = torch.float32,
) -> ConditionStack:
    """Build the 13-channel stack for one training sample at step t."""
    src = validate_image(source)
    m = validate_image(mask)
    if m.shape[:2] != src.shape[:2]:
        raise InvalidImageError("mask shape must match source")
    rng = np.random.default_rng(rng_seed)

    clean = toy_encode(src, dtype=dtype)
    noise = torch.from_numpy(rng.standard_normal(tuple(clean.shape))).to(dtype)
    noisy = schedule.add_noise(clean, noise, t)
    background = toy_encode(apply_mask(src, m), dtype=dtype)
    mask_ch = downsample_mask(m).to(dtype)

    depth_dropped = depth is None or rng.random() < cfg.depth_dropout_prob
    if depth_dropped:
        depth_latent = torch.zeros(LATENT_CHANNELS, clean.shape[1], clean.shape[2], dtype=dtype)
    else:
        if depth_projector is None:
            raise ValueError("depth supplied but no depth projector given")
        d = validate_image(depth)
        dt = torch.from_numpy(d.transpose(2, 0, 1)).to(dtype)[None]
        depth_latent = depth_projector(dt)[0]

    return ConditionStack(
        noisy_latent=noisy,
        mask_ch=mask_ch,
        background_latent=background,
        depth_latent=depth_latent,
        depth_dropped=depth_dropped,
        noise=noise,
        clean_latent=clean,
    )


def draw_condition_dropouts(rng: np.random.Generator, cfg: TrainConfig) -> tuple[bool, bool]:
    """(reference_dropped, depth_dropped) for one training step.

    Exposed separately so the dropout frequencies can be audited without
    running the model.
    """
    return bool(rng.random() < cfg.ref_dropout_prob), bool(rng.random() < cfg.depth_dropout_prob)


class Trainer:
    """Single-threaded, seed-deterministic training loop (Adam, fixed betas)."""

    def __init__(self, cfg: TrainConfig, schedule: NoiseSchedule | None = None, model: DualUNet | None = None):
        self.cfg = cfg
        self.schedule = schedule or NoiseSchedule(T=cfg.schedule_T)
        torch.manual_seed(cfg.seed)
        self.model = model or DualUNet(widths=cfg.widths)
        self.opt = torch.optim.Adam(self.model.parameters(), lr=cfg.lr, betas=(0.9, 0.999))
        self.rng = np.random.default_rng(cfg.seed)
        self.step_count = 0

    def train_step(self, samples: list[TrainingSample]) -> float:
        """One optimizer step over a list of equally sized samples; returns
        the MSE between predicted and true noise."""
        if not samples:
            raise ValueError("empty batch")
        ref_dropped, _ = draw_condition_dropouts(self.rng, self.cfg)
        t = int(self.rng.integers(0, self.schedule.T))
        stacks, noises, refs = [], [], []
        for s in samples:
            cond = assemble_conditions(
                s.source, s.mask, s.depth, t, int(self.rng.integers(0, 2**31)),
                self.cfg, self.schedule, depth_projector=self.model.depth_projector,
            )
            cond.reference_dropped = ref_dropped
            stacks.append(cond.concat())
            noises.append(cond.noise)
            refs.append(toy_encode(s.reference))
        stack = torch.stack(stacks)
        target = torch.stack(noises)
        ref_latent = None if ref_dropped else torch.stack(refs)
        tt = torch.full((len(samples),), t, dtype=torch.long)

        self.opt.zero_grad()
        pred = self.model(stack, ref_latent, tt)
        loss = torch.mean((pred - target) ** 2)
        if not torch.isfinite(loss):
            raise FloatingPointError(
                f"non-finite loss at step {self.step_count} (t={t}, ref_dropped={ref_dropped})"
            )
        loss.backward()
        self.opt.step()
        self.step_count += 1
        return float(loss.detach())
