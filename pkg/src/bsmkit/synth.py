"""Deterministic speech-like test signals.

Harmonic pulse trains with a drifting fundamental, syllabic amplitude
modulation, formant-style resonances, and a weak noise floor. Not speech,
but voiced, broadband, and non-stationary enough to exercise the render
and metric chains; used as the corpus fixture for tests and demos.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, write_audio


def speech_like(
    seconds: float = 4.0, sample_rate: int = 16000, seed: int = 0
) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    n = int(seconds * sample_rate)
    t = np.arange(n) / sample_rate
    f0 = 120.0 * (1.0 + 0.25 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t + rng.uniform(0, 6)))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros(n)
    for h in range(1, 40):
        if h * 200.0 > sample_rate / 2:
            break
        x += np.cos(h * phase + rng.uniform(0, 2 * np.pi)) / h
    # Syllabic gating with short pauses.
    env = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 6))
    env = np.clip(env, 0.0, None) ** 1.5
    x *= env
    # Two formant-ish resonators plus a gentle high tilt.
    for fc, bw in ((rng.uniform(400, 800), 120.0), (rng.uniform(1200, 2400), 220.0)):
        r = np.exp(-np.pi * bw / sample_rate)
        w = 2 * np.pi * fc / sample_rate
        x = lfilter([1.0], [1.0, -2 * r * np.cos(w), r * r], x)
    x += 0.01 * rng.normal(0, 1, n)
    x /= np.max(np.abs(x))
    return AudioBuffer(0.5 * x[np.newaxis, :], sample_rate)


def write_corpus(
    out_dir, n_clips: int = 12, seconds: float = 4.0, sample_rate: int = 16000,
    seed: int = 0,
) -> list[str]:
    """Write a directory of mono clips; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_clips):
        buf = speech_like(seconds, sample_rate, seed * 1000 + i)
        path = out / f"clip{i:03d}.wav"
        write_audio(path, buf)
        paths.append(str(path))
    return paths
