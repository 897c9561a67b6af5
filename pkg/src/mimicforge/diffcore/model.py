"""Miniature dual U-Net with reference key/value injection.

The imitative U-Net consumes the 13-channel condition stack; the reference
U-Net runs on the clean reference latent and exposes its hidden states at
the bottleneck and both decoder stages. At those sites the imitative
attention keys/values are computed over the concatenation of its own
tokens, the reference tokens, and one learned pooled global-reference
token. With no reference the attention reduces exactly to self-attention.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .codec import LATENT_CHANNELS

INJECTION_SITES = ("mid", "up1", "up0")
STACK_CHANNELS = 13  # noisy latent (4) | mask (1) | background (4) | depth (4)


def reference_attention(
    q_tokens: torch.Tensor,
    k_i: torch.Tensor,
    v_i: torch.Tensor,
    k_r: torch.Tensor | None,
    v_r: torch.Tensor | None,
    d_k: int,
) -> torch.Tensor:
    """softmax(Q cat(K_i, K_r)^T / sqrt(d_k)) cat(V_i, V_r).

    Token shapes are (..., N, d_k); reference tokens may be absent or empty,
    in which case this is plain self-attention, bitwise.
    """
    if q_tokens.shape[-1] != d_k or k_i.shape[-1] != d_k:
        raise ValueError("d_k mismatch between queries and keys")
    if (k_r is None) != (v_r is None):
        raise ValueError("k_r and v_r must be supplied together")
    if k_r is not None and k_r.shape[-2] > 0:
        if k_r.shape[-1] != d_k:
            raise ValueError("d_k mismatch on reference keys")
        k = torch.cat([k_i, k_r], dim=-2)
        v = torch.cat([v_i, v_r], dim=-2)
    else:
        k, v = k_i, v_i
    logits = q_tokens @ k.transpose(-1, -2) / math.sqrt(d_k)
    weights = torch.softmax(logits, dim=-1)
    return weights @ v


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps; shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None].to(freqs) * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, temb_dim: int):
        super().__init__()
        groups = math.gcd(8, cin)
        self.norm1 = nn.GroupNorm(groups, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, cout)
        self.norm2 = nn.GroupNorm(math.gcd(8, cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.temb_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class InjectableAttention(nn.Module):
    """Single-head attention whose K/V axis may carry extra reference tokens."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.norm = nn.GroupNorm(math.gcd(8, channels), channels)
        self.to_q = nn.Linear(channels, channels)
        self.to_k = nn.Linear(channels, channels)
        self.to_v = nn.Linear(channels, channels)
        self.to_out = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, ref_tokens: torch.Tensor | None = None) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = self.norm(x).reshape(b, c, h * w).transpose(1, 2)
        q = self.to_q(tokens)
        k_i = self.to_k(tokens)
        v_i = self.to_v(tokens)
        k_r = v_r = None
        if ref_tokens is not None and ref_tokens.shape[1] > 0:
            k_r = self.to_k(ref_tokens)
            v_r = self.to_v(ref_tokens)
        out = reference_attention(q, k_i, v_i, k_r, v_r, self.channels)
        out = self.to_out(out).transpose(1, 2).reshape(b, c, h, w)
        return x + out


class MiniUNet(nn.Module):
    """3-resolution U-Net with attention at the bottleneck and both decoder
    stages; those sites accept (and can emit) reference tokens."""

    def __init__(self, in_channels: int, widths: tuple[int, int, int] = (32, 64, 128), temb_dim: int = 64):
        super().__init__()
        w0, w1, w2 = widths
        self.widths = widths
        self.temb_dim = temb_dim
        self.temb_mlp = nn.Sequential(nn.Linear(temb_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim))
        self.stem = nn.Conv2d(in_channels, w0, 3, padding=1)
        self.enc0 = ResBlock(w0, w0, temb_dim)
        self.down0 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.enc1 = ResBlock(w1, w1, temb_dim)
        self.down1 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.mid1 = ResBlock(w2, w2, temb_dim)
        self.mid_attn = InjectableAttention(w2)
        self.mid2 = ResBlock(w2, w2, temb_dim)
        self.up1_conv = nn.Conv2d(w2, w1, 3, padding=1)
        self.up1_res = ResBlock(2 * w1, w1, temb_dim)
        self.up1_attn = InjectableAttention(w1)
        self.up0_conv = nn.Conv2d(w1, w0, 3, padding=1)
        self.up0_res = ResBlock(2 * w0, w0, temb_dim)
        self.up0_attn = InjectableAttention(w0)
        self.out_norm = nn.GroupNorm(math.gcd(8, w0), w0)
        self.out_conv = nn.Conv2d(w0, LATENT_CHANNELS, 3, padding=1)

    def site_width(self, site: str) -> int:
        return {"mid": self.widths[2], "up1": self.widths[1], "up0": self.widths[0]}[site]

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        ref_tokens: dict[str, torch.Tensor] | None = None,
        collect: bool = False,
    ):
        """Predict noise; with collect=True also return the pre-attention
        hidden states (as tokens) at each injection site."""
        ref_tokens = ref_tokens or {}
        temb = self.temb_mlp(timestep_embedding(t.to(x.dtype), self.temb_dim))
        collected: dict[str, torch.Tensor] = {}

        def tokens_of(h):
            b, c, hh, ww = h.shape
            return h.reshape(b, c, hh * ww).transpose(1, 2)

        h0 = self.enc0(self.stem(x), temb)
        h1 = self.enc1(self.down0(h0), temb)
        h = self.mid1(self.down1(h1), temb)
        if collect:
            collected["mid"] = tokens_of(h)
        h = self.mid_attn(h, ref_tokens.get("mid"))
        h = self.mid2(h, temb)

        h = self.up1_conv(F.interpolate(h, size=h1.shape[-2:], mode="nearest"))
        h = self.up1_res(torch.cat([h, h1], dim=1), temb)
        if collect:
            collected["up1"] = tokens_of(h)
        h = self.up1_attn(h, ref_tokens.get("up1"))

        h = self.up0_conv(F.interpolate(h, size=h0.shape[-2:], mode="nearest"))
        h = self.up0_res(torch.cat([h, h0], dim=1), temb)
        if collect:
            collected["up0"] = tokens_of(h)
        h = self.up0_attn(h, ref_tokens.get("up0"))

        eps = self.out_conv(F.silu(self.out_norm(h)))
        if collect:
            return eps, collected
        return eps


class DepthProjector(nn.Module):
    """Per-pixel linear 3->4 channel map followed by 8x average pooling."""

    def __init__(self):
        super().__init__()
        self.proj = nn.Conv2d(3, LATENT_CHANNELS, 1)
        nn.init.zeros_(self.proj.bias)

    def forward(self, depth: torch.Tensor) -> torch.Tensor:
        if depth.shape[1] == 1:
            depth = depth.repeat(1, 3, 1, 1)
        if depth.shape[1] != 3:
            raise ValueError("depth must have 1 or 3 channels")
        return F.avg_pool2d(self.proj(depth), kernel_size=8)


class DualUNet(nn.Module):
    """Imitative U-Net (13-channel stack) + reference U-Net (4-channel
    latent) + depth projector + learned pooled global-reference token."""

    def __init__(self, widths: tuple[int, int, int] = (32, 64, 128), temb_dim: int = 64):
        super().__init__()
        self.imitative = MiniUNet(STACK_CHANNELS, widths, temb_dim)
        self.reference = MiniUNet(LATENT_CHANNELS, widths, temb_dim)
        self.depth_projector = DepthProjector()
        # stands in for the CLIP-embedding cross-attention: one global token
        # pooled from reference bottleneck features, projected per site
        self.global_token_proj = nn.ModuleDict(
            {site: nn.Linear(widths[2], self.imitative.site_width(site)) for site in INJECTION_SITES}
        )

    def reference_tokens(self, ref_latent: torch.Tensor, t: torch.Tensor) -> dict[str, torch.Tensor]:
        _, feats = self.reference(ref_latent, t, collect=True)
        pooled = feats["mid"].mean(dim=1)
        return {
            site: torch.cat([feats[site], self.global_token_proj[site](pooled)[:, None, :]], dim=1)
            for site in INJECTION_SITES
        }

    def forward(
        self,
        stack: torch.Tensor,
        ref_latent: torch.Tensor | None,
        t: torch.Tensor,
    ) -> torch.Tensor:
        if stack.shape[1] != STACK_CHANNELS:
            raise ValueError(f"expected {STACK_CHANNELS}-channel stack, got {stack.shape[1]}")
        ref_tokens = None
        if ref_latent is not None:
            ref_tokens = self.reference_tokens(ref_latent, t)
        return self.imitative(stack, t, ref_tokens=ref_tokens)
