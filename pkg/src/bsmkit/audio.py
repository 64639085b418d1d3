"""Time-domain audio containers, WAV file I/O, and sample-rate conversion.

Samples are kept as float64 arrays shaped ``(channels, samples)`` with
dimensionless pressure amplitudes. WAV files are read/written through
:mod:`scipy.io.wavfile` (RIFF containers, PCM16 or IEEE float32); the
sample rate recorded in the file header is authoritative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


class AudioError(ValueError):
    """Raised for malformed audio data or unsupported file contents."""


@dataclass(frozen=True)
class AudioBuffer:
    """Multichannel audio held as float64, shape (channels, samples)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim != 2:
            raise AudioError(f"samples must be 1-D or 2-D, got ndim={arr.ndim}")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise AudioError("samples contain non-finite values")
        object.__setattr__(self, "samples", arr)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, idx: int) -> np.ndarray:
        return self.samples[idx]

    def mono(self) -> "AudioBuffer":
        if self.channels == 1:
            return self
        raise AudioError(f"expected mono buffer, got {self.channels} channels")


def read_audio(path, expect_channels: int | None = None) -> AudioBuffer:
    """Read a WAV file (PCM16 or float32) into an AudioBuffer.

    PCM16 is scaled by 1/32768 so full scale maps to 32767/32768.
    ``expect_channels`` raises :class:`AudioError` on a mismatch.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises bare ValueError on truncation
        raise AudioError(f"cannot read WAV file {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"unsupported WAV encoding {data.dtype} in {path}")
    if samples.ndim == 1:
        samples = samples[np.newaxis, :]
    else:
        samples = samples.T  # scipy returns (samples, channels)
    if expect_channels is not None and samples.shape[0] != expect_channels:
        raise AudioError(
            f"{path}: expected {expect_channels} channels, file has {samples.shape[0]}"
        )
    return AudioBuffer(samples, int(rate))


def write_audio(path, buffer: AudioBuffer, encoding: str = "float32") -> None:
    """Write an AudioBuffer as WAV. float32 round-trips losslessly."""
    data = buffer.samples.T
    if encoding == "float32":
        wavfile.write(path, buffer.sample_rate, data.astype(np.float32))
    elif encoding == "pcm16":
        clipped = np.clip(data, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, buffer.sample_rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise AudioError(f"unsupported encoding {encoding!r}")


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Resample with a windowed-sinc polyphase filter (scipy resample_poly)."""
    if target_rate <= 0:
        raise AudioError(f"target_rate must be positive, got {target_rate}")
    if buffer.sample_rate == target_rate:
        return buffer
    g = np.gcd(buffer.sample_rate, target_rate)
    up, down = target_rate // g, buffer.sample_rate // g
    out = resample_poly(buffer.samples, up, down, axis=1)
    return AudioBuffer(out, target_rate)
