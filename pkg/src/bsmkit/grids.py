"""Direction grids on the sphere and angular distance helpers."""

from __future__ import annotations

import numpy as np

from .sphere import direction_unit


def wrap_azimuth(phi_deg):
    """Wrap azimuth(s) to [-180, 180)."""
    return (np.asarray(phi_deg, dtype=np.float64) + 180.0) % 360.0 - 180.0


def great_circle_deg(a_deg: np.ndarray, b_deg: np.ndarray) -> np.ndarray:
    """Great-circle distance in degrees between (theta, phi) direction arrays."""
    ua = direction_unit(np.atleast_2d(a_deg)[:, 0], np.atleast_2d(a_deg)[:, 1])
    ub = direction_unit(np.atleast_2d(b_deg)[:, 0], np.atleast_2d(b_deg)[:, 1])
    return np.rad2deg(np.arccos(np.clip(np.sum(ua * ub, axis=-1), -1.0, 1.0)))


def fibonacci_sphere(n: int) -> np.ndarray:
    """Near-uniform spherical grid of n directions, (n, 2) degrees."""
    i = np.arange(n) + 0.5
    theta = np.rad2deg(np.arccos(1 - 2 * i / n))
    phi = wrap_azimuth(np.rad2deg(np.pi * (1 + 5**0.5) * i))
    return np.stack([theta, phi], axis=1)


def azimuth_ring(step_deg: float, theta_deg: float = 90.0) -> np.ndarray:
    """Single ring of azimuths at fixed elevation, (360/step, 2) degrees."""
    n = int(round(360.0 / step_deg))
    if abs(n * step_deg - 360.0) > 1e-9:
        raise ValueError(f"step {step_deg} does not divide 360 degrees")
    phi = wrap_azimuth(np.arange(n) * step_deg)
    return np.stack([np.full(n, theta_deg), phi], axis=1)


def ring_sphere(theta_step_deg: float = 5.0, phi_step_deg: float = 2.5) -> np.ndarray:
    """Rings of azimuths over elevation plus both poles; covers the sphere
    with gaps bounded by about half the larger step."""
    thetas = np.arange(theta_step_deg, 180.0, theta_step_deg)
    rows = [azimuth_ring(phi_step_deg, t) for t in thetas]
    rows.append(np.array([[0.0, 0.0], [180.0, 0.0]]))
    return np.concatenate(rows, axis=0)
