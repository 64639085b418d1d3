"""Binaural correction network.

Time-frequency architecture of interleaved narrow-band and cross-band
blocks with residual connections: per-frequency multi-head self-attention
over time plus a time-convolutional feed-forward stage (all frequencies
share weights), alternating with per-frame cross-band processing of
grouped frequency convolutions plus full-band linear maps across the
whole spectrum. A time-convolutional input layer lifts the 4-channel
real/imaginary features and a linear head, zero-initialized so training
starts from the identity correction, maps back to the 4 channels.

The full-band linear maps dominate the parameter count, which lands at
roughly 3.2 M in the default (small) configuration for 513 bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .features import N_BINS


@dataclass(frozen=True)
class ModelSpec:
    n_bins: int = N_BINS
    hidden: int = 48
    blocks: int = 4
    heads: int = 4
    ffn_mult: int = 2
    kernel_t: int = 5
    kernel_f: int = 3
    fullband_per_block: int = 3
    fullband_groups: int = 8


class NarrowBandBlock(nn.Module):
    """Per-frequency sequence modeling over time, weights shared across bins."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        c = spec.hidden
        self.norm1 = nn.LayerNorm(c)
        self.attn = nn.MultiheadAttention(c, spec.heads, batch_first=True)
        self.norm2 = nn.LayerNorm(c)
        hidden = spec.ffn_mult * c
        self.ffn_in = nn.Linear(c, hidden)
        self.tconv = nn.Conv1d(
            hidden, hidden, spec.kernel_t, padding=spec.kernel_t // 2, groups=hidden
        )
        self.ffn_out = nn.Linear(hidden, c)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, F, T, C) -> fold frequency into the batch.
        b, f, t, c = x.shape
        seq = x.reshape(b * f, t, c)
        h = self.norm1(seq)
        h, _ = self.attn(h, h, h, need_weights=False)
        seq = seq + h
        h = self.ffn_in(self.norm2(seq))
        h = torch.nn.functional.silu(self.tconv(h.transpose(1, 2)).transpose(1, 2))
        seq = seq + self.ffn_out(h)
        return seq.reshape(b, f, t, c)


class FullBandLinear(nn.Module):
    """Linear map across the whole frequency axis on a channel bottleneck.

    The F x F matrix carries nearly all parameters (the bin count sets the
    model size); the surrounding channel projections keep its compute
    proportional to the bottleneck width rather than the hidden width.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.down = nn.Linear(spec.hidden, spec.fullband_groups)
        self.across = nn.Linear(spec.n_bins, spec.n_bins)
        self.up = nn.Linear(spec.fullband_groups, spec.hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (N, C, F)
        h = self.down(x.transpose(1, 2)).transpose(1, 2)  # (N, G, F)
        h = torch.nn.functional.silu(self.across(h))
        return self.up(h.transpose(1, 2)).transpose(1, 2)


class CrossBandBlock(nn.Module):
    """Per-frame processing across frequency, weights shared across frames."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        c = spec.hidden
        self.norm1 = nn.LayerNorm(c)
        self.fconv1 = nn.Conv1d(c, c, spec.kernel_f, padding=spec.kernel_f // 2, groups=8)
        self.fconv2 = nn.Conv1d(c, c, spec.kernel_f, padding=spec.kernel_f // 2, groups=8)
        self.norm2 = nn.LayerNorm(c)
        self.fullband = nn.ModuleList(
            FullBandLinear(spec) for _ in range(spec.fullband_per_block)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, F, T, C) -> fold time into the batch.
        b, f, t, c = x.shape
        seq = x.permute(0, 2, 3, 1).reshape(b * t, c, f)
        h = self.norm1(seq.transpose(1, 2)).transpose(1, 2)
        h = torch.nn.functional.silu(self.fconv1(h))
        h = self.fconv2(h)
        seq = seq + h
        for lin in self.fullband:
            h = self.norm2(seq.transpose(1, 2)).transpose(1, 2)
            seq = seq + lin(h)
        return seq.reshape(b, t, c, f).permute(0, 3, 1, 2)


class BinauralCorrector(nn.Module):
    def __init__(self, spec: ModelSpec = ModelSpec()):
        super().__init__()
        self.spec = spec
        c = spec.hidden
        self.input_conv = nn.Conv1d(4, c, spec.kernel_t, padding=spec.kernel_t // 2)
        blocks = []
        for _ in range(spec.blocks):
            blocks.append(NarrowBandBlock(spec))
            blocks.append(CrossBandBlock(spec))
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Linear(c, 4)
        # Identity start: the network output is input + head(features).
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        """feats: (B, 4, F, T) -> corrected features, same shape."""
        b, _, f, t = feats.shape
        h = self.input_conv(feats.permute(0, 2, 1, 3).reshape(b * f, 4, t))
        h = h.reshape(b, f, -1, t).permute(0, 1, 3, 2)  # (B, F, T, C)
        for block in self.blocks:
            h = block(h)
        correction = self.head(h).permute(0, 3, 1, 2)  # (B, 4, F, T)
        return feats + correction

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
