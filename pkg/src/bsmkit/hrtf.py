"""HRTF storage, rotated directional lookup, and the spherical-head generator.

Conventions: azimuth phi runs from +x toward +y (the listener's left),
elevation theta from +z downward; the ears of the analytic head sit on
the sphere surface at (90, +90) (left) and (90, -90) (right). Head
rotation is azimuthal and rightward-positive: a head turned right by
``rot`` degrees sees the world direction (theta, phi) at head-frame
azimuth phi + rot, so rotated lookups query the grid at (theta, phi + rot).

The HRIR-pack container is little-endian and bit-exact:

    magic "HRIR" | u32 version=1 | u32 n_directions | u32 ir_len |
    u32 sample_rate | n x 2 float64 (theta, phi degrees) |
    n x 2 x ir_len float32 samples (left then right per direction)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioBuffer, resample
from .grids import ring_sphere, wrap_azimuth
from .sphere import SPEED_OF_SOUND, SphereKernel, direction_unit, surface_pressure
from .stft import StftConfig

_MAGIC = b"HRIR"
_VERSION = 1

EAR_DIRECTIONS_DEG = {"left": (90.0, 90.0), "right": (90.0, -90.0)}
DEFAULT_HEAD_RADIUS = 0.0875
_BULK_DELAY_SAMPLES = 16


class HrtfError(ValueError):
    """Raised for malformed packs, duplicate grids, or geometry mismatches."""


@dataclass(frozen=True)
class HrtfQuery:
    doa_deg: tuple[float, float]
    rotation_deg: float = 0.0

    def rotated_direction(self) -> tuple[float, float]:
        theta, phi = self.doa_deg
        if not (0.0 <= theta <= 180.0):
            raise HrtfError(f"theta must be in [0, 180], got {theta}")
        return theta, float(wrap_azimuth(phi + self.rotation_deg))


class HrtfSet:
    """Direction-indexed HRIR pairs with nearest-neighbor rotated lookup."""

    def __init__(self, grid_deg: np.ndarray, irs: np.ndarray, sample_rate: int):
        grid = np.asarray(grid_deg, dtype=np.float64)
        irs = np.asarray(irs, dtype=np.float64)
        if grid.ndim != 2 or grid.shape[1] != 2:
            raise HrtfError("grid must have shape (N, 2)")
        if irs.ndim != 3 or irs.shape[0] != grid.shape[0] or irs.shape[1] != 2:
            raise HrtfError("irs must have shape (N, 2, ir_len) matching the grid")
        grid = np.stack([grid[:, 0], wrap_azimuth(grid[:, 1])], axis=1)
        rounded = np.round(grid, 6)
        if np.unique(rounded, axis=0).shape[0] != grid.shape[0]:
            raise HrtfError("duplicate directions in HRTF grid")
        self.grid_deg = grid
        self.irs = irs
        self.sample_rate = int(sample_rate)
        self._units = direction_unit(grid[:, 0], grid[:, 1])

    def __len__(self) -> int:
        return self.grid_deg.shape[0]

    @property
    def ir_len(self) -> int:
        return self.irs.shape[2]

    def nearest_index(self, direction_deg: tuple[float, float]) -> tuple[int, float]:
        u = direction_unit(*direction_deg)
        dots = self._units @ u
        idx = int(np.argmax(dots))
        err = float(np.rad2deg(np.arccos(np.clip(dots[idx], -1.0, 1.0))))
        return idx, err

    def max_grid_gap_deg(self, probes: int = 2000) -> float:
        """Covering-radius estimate: worst lookup error over probe directions."""
        from .grids import fibonacci_sphere

        worst = 0.0
        for d in fibonacci_sphere(probes):
            _, err = self.nearest_index((d[0], d[1]))
            worst = max(worst, err)
        return worst


def lookup_rotated(hrtf: HrtfSet, query: HrtfQuery) -> tuple[np.ndarray, int, float]:
    """IR pair nearest the rotated direction: (irs (2, ir_len), index, error degrees)."""
    if len(hrtf) == 0:
        raise HrtfError("empty HRTF set")
    idx, err = hrtf.nearest_index(query.rotated_direction())
    return hrtf.irs[idx], idx, err


def write_hrir_pack(path, hrtf: HrtfSet) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", _VERSION, len(hrtf), hrtf.ir_len, hrtf.sample_rate))
        f.write(hrtf.grid_deg.astype("<f8").tobytes())
        f.write(hrtf.irs.astype("<f4").tobytes())


def load_hrir_pack(path, target_rate: int = 16000) -> HrtfSet:
    """Load a pack and resample the IRs to the working rate if needed."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise HrtfError(f"{path}: bad magic {blob[:4]!r}")
    version, n, ir_len, rate = struct.unpack_from("<IIII", blob, 4)
    if version != _VERSION:
        raise HrtfError(f"{path}: unsupported version {version}")
    off = 4 + 16
    grid_bytes = n * 2 * 8
    ir_bytes = n * 2 * ir_len * 4
    if len(blob) != off + grid_bytes + ir_bytes:
        raise HrtfError(
            f"{path}: size mismatch (got {len(blob)}, expected {off + grid_bytes + ir_bytes})"
        )
    grid = np.frombuffer(blob, dtype="<f8", count=n * 2, offset=off).reshape(n, 2)
    irs = np.frombuffer(blob, dtype="<f4", count=n * 2 * ir_len, offset=off + grid_bytes)
    irs = irs.reshape(n, 2, ir_len).astype(np.float64)
    if rate != target_rate:
        flat = AudioBuffer(irs.reshape(n * 2, ir_len), rate)
        irs = resample(flat, target_rate).samples.reshape(n, 2, -1)
        rate = target_rate
    return HrtfSet(grid.copy(), irs, rate)


def analytic_sphere_hrtf(
    direction_deg: tuple[float, float],
    freq_grid: np.ndarray,
    head_radius: float = DEFAULT_HEAD_RADIUS,
    speed_of_sound: float = SPEED_OF_SOUND,
) -> np.ndarray:
    """Exact per-bin complex (left, right) pair for one arrival direction.

    Rigid-sphere scattering evaluated at the ear positions; no bulk delay.
    Shape (len(freq_grid), 2).
    """
    if head_radius <= 0:
        raise HrtfError("head_radius must be positive")
    freqs = np.atleast_1d(np.asarray(freq_grid, dtype=np.float64))
    k = 2 * np.pi * freqs / speed_of_sound
    d = direction_unit(*direction_deg)
    out = np.empty((freqs.size, 2), dtype=np.complex128)
    for i, ear in enumerate(("left", "right")):
        e = direction_unit(*EAR_DIRECTIONS_DEG[ear])
        cosang = float(np.clip(d @ e, -1.0, 1.0))
        out[:, i] = surface_pressure(k, np.array([cosang]), head_radius)[:, 0]
    return out


@lru_cache(maxsize=4)
def _analytic_set_cached(
    theta_step: float, phi_step: float, head_radius: float, sample_rate: int, ir_len: int
) -> HrtfSet:
    grid = ring_sphere(theta_step, phi_step)
    freqs = np.arange(ir_len // 2 + 1) * (sample_rate / ir_len)
    kernel = SphereKernel(freqs, head_radius)
    units = direction_unit(grid[:, 0], grid[:, 1])
    irs = np.empty((grid.shape[0], 2, ir_len))
    # Shared bulk delay keeps both ears causal while preserving interaural timing.
    phase = np.exp(-2j * np.pi * freqs * _BULK_DELAY_SAMPLES / sample_rate)
    for i, ear in enumerate(("left", "right")):
        e = direction_unit(*EAR_DIRECTIONS_DEG[ear])
        theta = np.rad2deg(np.arccos(np.clip(units @ e, -1.0, 1.0)))
        spectra = kernel.evaluate(theta).T * phase[None, :]  # (N, bins)
        irs[:, i, :] = np.fft.irfft(spectra, n=ir_len, axis=1)
    return HrtfSet(grid, irs, sample_rate)


def analytic_sphere_set(
    head_radius: float = DEFAULT_HEAD_RADIUS,
    sample_rate: int = 16000,
    ir_len: int = 256,
    theta_step_deg: float = 5.0,
    phi_step_deg: float = 2.5,
) -> HrtfSet:
    """Analytic spherical-head HRTF fixture on a ring grid (cached)."""
    return _analytic_set_cached(
        float(theta_step_deg), float(phi_step_deg), float(head_radius),
        int(sample_rate), int(ir_len),
    )


def hrtf_to_bins(ir_pair: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Zero-padded DFT of an IR pair on the one-sided bin grid, (n_bins, 2)."""
    ir_pair = np.atleast_2d(np.asarray(ir_pair, dtype=np.float64))
    if ir_pair.shape[-1] > cfg.fft_len:
        raise HrtfError(
            f"IR length {ir_pair.shape[-1]} exceeds fft_len {cfg.fft_len}"
        )
    return np.fft.rfft(ir_pair, n=cfg.fft_len, axis=-1).T
