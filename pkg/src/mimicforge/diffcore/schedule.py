"""Linear-beta DDPM noise schedule (the classical 1e-4 -> 0.02 default)."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch


@dataclass
class NoiseSchedule:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: torch.Tensor = field(init=False)
    alphas: torch.Tensor = field(init=False)
    alpha_bars: torch.Tensor = field(init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        betas = torch.linspace(self.beta_start, self.beta_end, self.T, dtype=torch.float64)
        if not ((betas > 0).all() and (betas < 1).all()):
            raise ValueError("betas must lie in (0, 1)")
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alpha_bars = torch.cumprod(self.alphas, dim=0)

    def add_noise(self, x0: torch.Tensor, noise: torch.Tensor, t: int) -> torch.Tensor:
        """Forward process: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
        if not 0 <= t < self.T:
            raise ValueError(f"step {t} outside schedule [0, {self.T})")
        ab = self.alpha_bars[t].to(x0.dtype)
        return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * noise

    def ddim_steps(self, n: int) -> list[int]:
        """n strictly decreasing timesteps from T-1 down to 0."""
        if not 1 <= n <= self.T:
            raise ValueError("invalid step count")
        ts = torch.linspace(self.T - 1, 0, n).round().long().tolist()
        # guard against duplicates from rounding at small T
        out = []
        for t in ts:
            if not out or t < out[-1]:
                out.append(int(t))
        return out
