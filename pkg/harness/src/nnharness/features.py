"""Torch STFT/iSTFT mirroring the dataset convention.

Periodic Hann window of 1024 samples, FFT 1024, hop 256, reflect-centered
frames, squared-window overlap-add normalization: numerically matched to
the pipeline that produced the training WAVs so spectral losses compare
like with like.
"""

from __future__ import annotations

import torch

WIN_LEN = 1024
FFT_LEN = 1024
HOP = 256
N_BINS = FFT_LEN // 2 + 1
SAMPLE_RATE = 16000


def hann_window(device=None, dtype=torch.float64) -> torch.Tensor:
    n = torch.arange(WIN_LEN, device=device, dtype=dtype)
    return 0.5 - 0.5 * torch.cos(2 * torch.pi * n / WIN_LEN)


def stft(x: torch.Tensor) -> torch.Tensor:
    """(..., T) real -> (..., n_bins, frames) complex, reflect-centered."""
    t = x.shape[-1]
    if t % HOP:
        raise ValueError(f"signal length {t} must be a hop multiple")
    half = WIN_LEN // 2
    pad_left = torch.flip(x[..., 1 : half + 1], dims=(-1,))
    pad_right = torch.flip(x[..., -half - 1 : -1], dims=(-1,))
    padded = torch.cat([pad_left, x, pad_right], dim=-1)
    n_frames = 1 + t // HOP
    frames = padded.unfold(-1, WIN_LEN, HOP)[..., :n_frames, :]
    win = hann_window(x.device, x.dtype)
    return torch.fft.rfft(frames * win, n=FFT_LEN, dim=-1).transpose(-1, -2)


def istft(spec: torch.Tensor, length: int) -> torch.Tensor:
    """(..., n_bins, frames) complex -> (..., length) real overlap-add."""
    frames = torch.fft.irfft(spec.transpose(-1, -2), n=FFT_LEN, dim=-1)
    win = hann_window(spec.device, frames.dtype)
    frames = frames * win
    n_frames = frames.shape[-2]
    total = (n_frames - 1) * HOP + WIN_LEN
    out = frames.new_zeros(frames.shape[:-2] + (total,))
    norm = frames.new_zeros(total)
    for f in range(n_frames):
        out[..., f * HOP : f * HOP + WIN_LEN] += frames[..., f, :]
        norm[f * HOP : f * HOP + WIN_LEN] += win**2
    out = out / norm.clamp_min(1e-12)
    half = WIN_LEN // 2
    return out[..., half : half + length]


def pack_ri(spec: torch.Tensor) -> torch.Tensor:
    """Complex (B, 2, F, T) -> real features (B, 4, F, T):
    [Re L, Im L, Re R, Im R] per time-frequency bin."""
    return torch.stack(
        [spec[:, 0].real, spec[:, 0].imag, spec[:, 1].real, spec[:, 1].imag], dim=1
    )


def unpack_ri(feats: torch.Tensor) -> torch.Tensor:
    """Real features (B, 4, F, T) -> complex (B, 2, F, T)."""
    left = torch.complex(feats[:, 0], feats[:, 1])
    right = torch.complex(feats[:, 2], feats[:, 3])
    return torch.stack([left, right], dim=1)
