"""STFT analysis/synthesis with reflect-centered frames.

The default configuration is a periodic Hann window of 1024 samples, FFT
length 1024, hop 256, at 16 kHz, giving 513 one-sided frequency bins of
width fs/1024 = 15.625 Hz. Frames are centered: the signal is padded by
half a window with reflected samples on both ends, so frame ``t`` is
centered on sample ``t * hop``. With the default 4x overlap the Hann
window satisfies constant overlap-add and ``istft(stft(x))`` reproduces
interior samples to float64 rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .audio import AudioBuffer


class StftError(ValueError):
    """Raised for geometry mismatches between signals, configs, and spectra."""


@dataclass(frozen=True)
class StftConfig:
    window: str = "hann"
    win_len: int = 1024
    fft_len: int = 1024
    hop: int = 256
    sample_rate: int = 16000

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.fft_len):
            raise StftError(
                f"require hop <= win_len <= fft_len, got {self.hop}/{self.win_len}/{self.fft_len}"
            )
        if self.sample_rate <= 0:
            raise StftError("sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.fft_len

    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_hz

    def window_array(self) -> np.ndarray:
        return get_window(self.window, self.win_len, fftbins=True).astype(np.float64)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT coefficients shaped (n_bins, n_frames, channels)."""

    bins: np.ndarray
    config: StftConfig
    signal_len: int

    def __post_init__(self):
        arr = np.asarray(self.bins, dtype=np.complex128)
        if arr.ndim != 3:
            raise StftError(f"bins must be 3-D (bins, frames, channels), got ndim={arr.ndim}")
        if arr.shape[0] != self.config.n_bins:
            raise StftError(
                f"bin count {arr.shape[0]} inconsistent with fft_len {self.config.fft_len}"
            )
        object.__setattr__(self, "bins", arr)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def channels(self) -> int:
        return self.bins.shape[2]


def _frame_count(n: int, hop: int) -> int:
    return 1 + int(np.ceil(n / hop)) if n % hop else 1 + n // hop


def stft(buffer: AudioBuffer, cfg: StftConfig) -> ComplexSpectrogram:
    """Analyze a buffer into reflect-centered, Hann-windowed frames."""
    if buffer.sample_rate != cfg.sample_rate:
        raise StftError(
            f"buffer rate {buffer.sample_rate} != config rate {cfg.sample_rate}"
        )
    if buffer.n_samples == 0:
        raise StftError("empty buffer")
    x = buffer.samples
    n = x.shape[1]
    half = cfg.win_len // 2
    n_frames = _frame_count(n, cfg.hop)
    # Reflect-pad half a window each side, then zero-pad so the last frame
    # is complete even when hop does not divide the signal length.
    pad_tail = (n_frames - 1) * cfg.hop + cfg.win_len - (n + 2 * half)
    left = x[:, 1 : half + 1][:, ::-1] if n > half else _reflect(x, half, side="left")
    right = (
        x[:, -2 : -half - 2 : -1] if n > half + 1 else _reflect(x, half, side="right")
    )
    padded = np.concatenate(
        [left, x, right, np.zeros((x.shape[0], max(pad_tail, 0)))], axis=1
    )
    win = cfg.window_array()
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = padded[:, idx] * win  # (ch, frames, win_len)
    spec = np.fft.rfft(frames, n=cfg.fft_len, axis=2)  # (ch, frames, bins)
    return ComplexSpectrogram(np.transpose(spec, (2, 1, 0)), cfg, n)


def _reflect(x: np.ndarray, amount: int, side: str) -> np.ndarray:
    # Degenerate short-signal case: numpy reflect handles repetition.
    mode_pad = (amount, 0) if side == "left" else (0, amount)
    padded = np.pad(x, ((0, 0), mode_pad), mode="reflect") if x.shape[1] > 1 else np.pad(
        x, ((0, 0), mode_pad), mode="edge"
    )
    return padded[:, :amount] if side == "left" else padded[:, -amount:]


def istft(spec: ComplexSpectrogram, cfg: StftConfig | None = None) -> AudioBuffer:
    """Overlap-add synthesis with squared-window normalization.

    Output length equals the analyzed signal length recorded on the
    spectrogram; edge samples (within half a window of either end) carry
    the reflect-padding approximation and are excluded from round-trip
    guarantees.
    """
    cfg = cfg or spec.config
    if spec.bins.shape[0] != cfg.n_bins:
        raise StftError(
            f"spectrogram has {spec.bins.shape[0]} bins, config implies {cfg.n_bins}"
        )
    frames = np.fft.irfft(np.transpose(spec.bins, (2, 1, 0)), n=cfg.fft_len, axis=2)
    frames = frames[:, :, : cfg.win_len]
    win = cfg.window_array()
    frames = frames * win
    n_frames = spec.n_frames
    half = cfg.win_len // 2
    total = (n_frames - 1) * cfg.hop + cfg.win_len
    out = np.zeros((frames.shape[0], total))
    norm = np.zeros(total)
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.win_len)
        out[:, sl] += frames[:, t]
        norm[sl] += win**2
    norm = np.maximum(norm, 1e-12)
    out /= norm
    n = spec.signal_len
    return AudioBuffer(out[:, half : half + n], cfg.sample_rate)
