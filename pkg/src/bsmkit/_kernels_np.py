"""NumPy fallback for the image-source deposit kernel.

Same contract as the Cython implementation in ``_kernels.pyx``; selected
at import time by :mod:`bsmkit._backend` when the extension is missing.
Scatter-adds are realized with per-microphone ``bincount`` calls over
chunks of images to bound temporary memory.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_CHUNK = 16384


def _cubic_cells(pos: np.ndarray, n_cells: int) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange cubic stencil (indices, weights), reflected at both grid ends."""
    pos = np.clip(pos, 0, n_cells - 1)
    base = np.minimum(np.floor(pos).astype(np.intp), n_cells - 2)
    t = pos - base
    w = np.empty(pos.shape + (4,))
    w[..., 0] = -t * (t - 1) * (t - 2) / 6
    w[..., 1] = (t * t - 1) * (t - 2) / 2
    w[..., 2] = -t * (t + 1) * (t - 2) / 2
    w[..., 3] = t * (t * t - 1) / 6
    idx = base[..., None] + np.arange(-1, 3)
    idx = np.abs(idx)
    over = idx > n_cells - 1
    idx[over] = 2 * (n_cells - 1) - idx[over]
    return idx, w


def deposit_trains(
    trains: np.ndarray,
    theta_pos: np.ndarray,
    gains: np.ndarray,
    tap_base: np.ndarray,
    tap_w: np.ndarray,
) -> None:
    """Accumulate weighted fractional-delay taps into per-mic delay trains.

    trains: (M, N2, C) float64, modified in place. Axis 1 is the 2x
    oversampled time grid, axis 2 the angular interpolation cells.
    theta_pos: (I, M) float64 -- angle of each image from each mic, in cell units.
    gains: (I,) float64       -- image gains, folded into the angular weights.
    tap_base: (I,) intp       -- first tap position on the length-N2 circle.
    tap_w: (I, J) float64     -- gridding-kernel tap values per image.
    """
    n_mics, n2, n_cells = trains.shape
    n_img, n_taps = tap_w.shape
    for start in range(0, n_img, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n_img))
        taps = (tap_base[sl, None] + np.arange(n_taps)[None, :]) % n2  # (i, J)
        for m in range(n_mics):
            idx, w = _cubic_cells(theta_pos[sl, m], n_cells)  # (i, 4)
            flat = (taps[:, :, None] * n_cells + idx[:, None, :]).ravel()
            wt = (tap_w[sl, :, None] * (w * gains[sl, None])[:, None, :]).ravel()
            trains[m] += np.bincount(flat, weights=wt, minlength=n2 * n_cells).reshape(
                n2, n_cells
            )
