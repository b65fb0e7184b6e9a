"""U-shaped denoising network with sinusoidal timestep embedding.

The architecture is a configuration concern, not part of any contract: only
the input/output channel counts are. Heavy blocks sit below the first
downsample so small profiles stay fast on CPU.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def _groups(channels: int) -> int:
    for g in (8, 4, 2, 1):
        if channels % g == 0:
            return g
    return 1


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            torch.arange(half, device=t.device, dtype=torch.float32)
            * -(math.log(10000.0) / max(half - 1, 1))
        )
        args = t.float()[:, None] * freqs[None, :]
        emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
        if self.dim % 2 == 1:
            emb = F.pad(emb, (0, 1))
        return emb


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(in_ch), in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = nn.GroupNorm(_groups(out_ch), out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class UNet(nn.Module):
    """Encoder-decoder denoiser predicting noise from (x_t, t).

    `depth` is the number of 2x downsamplings; input sides must be divisible
    by 2**depth.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        base_width: int = 32,
        depth: int = 2,
        time_embed_dim: int | None = None,
    ):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.base_width = base_width
        self.depth = depth
        widths = [base_width * 2**i for i in range(depth + 1)]
        time_dim = time_embed_dim or 4 * base_width
        self.time_embed_dim = time_dim

        self.time_embed = SinusoidalTimeEmbedding(base_width)
        self.time_mlp = nn.Sequential(
            nn.Linear(base_width, time_dim),
            nn.SiLU(),
            nn.Linear(time_dim, time_dim),
        )
        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)
        # one ResBlock per level at that level's resolution (full res included),
        # then a strided conv into the next width
        self.down_blocks = nn.ModuleList(
            ResBlock(widths[i], widths[i], time_dim) for i in range(depth)
        )
        self.downsamples = nn.ModuleList(
            nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1) for i in range(depth)
        )
        self.mid = ResBlock(widths[-1], widths[-1], time_dim)
        self.up_blocks = nn.ModuleList(
            # input: upsampled deeper features concatenated with the level skip
            ResBlock(widths[i + 1] + widths[i], widths[i], time_dim)
            for i in range(depth)
        )
        self.head_norm = nn.GroupNorm(_groups(widths[0]), widths[0])
        self.head = nn.Conv2d(widths[0], out_channels, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        temb = self.time_mlp(self.time_embed(t).to(self.stem.weight.dtype))
        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h, temb)
            skips.append(h)
            h = down(h)
        h = self.mid(h, temb)
        for i in reversed(range(self.depth)):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = self.up_blocks[i](torch.cat([h, skips[i]], dim=1), temb)
        return self.head(F.silu(self.head_norm(h)))
