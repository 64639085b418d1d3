"""Microphone array geometry and rigid-sphere steering vectors.

The default array is the six-microphone semicircle on a rigid sphere of
radius 10 cm: theta_m = 90 degrees, phi_m = 90 - 180 (m-1)/(M-1), so the
microphones span the frontal arc from the left (+y) to the right (-y).

Yaw is a rigid azimuthal rotation of the whole array, positive rightward
(toward -y): a microphone at azimuth phi_m sits at world azimuth
phi_m - yaw. This matches the rightward-positive head-rotation convention
used by the HRTF lookup, so co-rotating array and head by the same angle
preserves their relative geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sphere import SPEED_OF_SOUND, direction_unit, surface_pressure


def default_mic_directions(mic_count: int = 6) -> np.ndarray:
    m = np.arange(1, mic_count + 1)
    phi = 90.0 - 180.0 * (m - 1) / (mic_count - 1)
    theta = np.full(mic_count, 90.0)
    return np.stack([theta, phi], axis=1)


@dataclass(frozen=True)
class ArrayGeometry:
    mic_directions_deg: np.ndarray = field(default_factory=default_mic_directions)
    radius: float = 0.10
    yaw_deg: float = 0.0

    def __post_init__(self):
        dirs = np.asarray(self.mic_directions_deg, dtype=np.float64)
        if dirs.ndim != 2 or dirs.shape[1] != 2:
            raise ValueError("mic_directions_deg must have shape (M, 2)")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "mic_directions_deg", dirs)

    @property
    def mic_count(self) -> int:
        return self.mic_directions_deg.shape[0]

    def rotated(self, extra_yaw_deg: float) -> "ArrayGeometry":
        return ArrayGeometry(self.mic_directions_deg, self.radius, self.yaw_deg + extra_yaw_deg)

    def mic_units(self) -> np.ndarray:
        """World-frame unit vectors of the microphones, shape (M, 3)."""
        theta = self.mic_directions_deg[:, 0]
        phi = self.mic_directions_deg[:, 1] - self.yaw_deg
        return direction_unit(theta, phi)


def rigid_sphere_steering(
    geom: ArrayGeometry,
    directions_deg: np.ndarray,
    freq_grid: np.ndarray,
    speed_of_sound: float = SPEED_OF_SOUND,
) -> np.ndarray:
    """Exact steering tensor, shape (bins, mics, directions).

    Each entry is the pressure a unit plane wave from the given world
    direction produces at the microphone on the rigid sphere, evaluated by
    the truncated modal series (order ceil(k r) + 8 per bin). Zero
    frequency takes the analytic limit of 1 for every microphone.
    """
    directions_deg = np.atleast_2d(np.asarray(directions_deg, dtype=np.float64))
    freqs = np.atleast_1d(np.asarray(freq_grid, dtype=np.float64))
    if np.any(freqs < 0):
        raise ValueError("frequencies must be non-negative")
    mic_u = geom.mic_units()  # (M, 3)
    dir_u = direction_unit(directions_deg[:, 0], directions_deg[:, 1])  # (D, 3)
    cosang = np.clip(mic_u @ dir_u.T, -1.0, 1.0)  # (M, D)
    k = 2 * np.pi * freqs / speed_of_sound
    flat = surface_pressure(k, cosang.ravel(), geom.radius)  # (F, M*D)
    return flat.reshape(freqs.size, geom.mic_count, directions_deg.shape[0])
