# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled deposit kernel for image-source rendering.

One pass over the image list scatters gridding-kernel taps into
time-major per-microphone delay trains, computing the cubic angular
interpolation weights inline. Images arrive sorted by delay, so
consecutive images touch the same few time rows and the working set
stays cache-resident. This loop dominates render time for reverberant
rooms (hundreds of thousands of images); see
``benchmarks/bench_render.py`` for a comparison against the NumPy
fallback in ``_kernels_np``.
"""

import numpy as np

cimport numpy as cnp

from libc.math cimport floor

cnp.import_array()

BACKEND_NAME = "cython"


def deposit_trains(
    cnp.float64_t[:, :, ::1] trains,      # (M, N2, C) time-major
    cnp.float64_t[:, ::1] theta_pos,      # (I, M) angle in cell units
    cnp.float64_t[::1] gains,             # (I,)
    cnp.intp_t[::1] tap_base,             # (I,) first tap, already mod N2
    cnp.float64_t[:, ::1] tap_w,          # (I, J) gridding kernel values
):
    """In-place scatter-add; see ``_kernels_np.deposit_trains`` for the contract."""
    cdef Py_ssize_t n2 = trains.shape[1]
    cdef Py_ssize_t n_cells = trains.shape[2]
    cdef Py_ssize_t n_img = tap_w.shape[0]
    cdef Py_ssize_t n_mics = trains.shape[0]
    cdef Py_ssize_t n_taps = tap_w.shape[1]
    cdef Py_ssize_t i, m, j, base, pos, b
    cdef Py_ssize_t c0, c1, c2, c3, top
    cdef double p, t, g, kb
    cdef double w0, w1, w2, w3
    cdef double* row

    top = n_cells - 1
    for m in range(n_mics):
        for i in range(n_img):
            base = tap_base[i]
            g = gains[i]
            p = theta_pos[i, m]
            if p < 0:
                p = 0
            elif p > top:
                p = top
            b = <Py_ssize_t>p
            if b > top - 1:
                b = top - 1
            t = p - b
            # Lagrange cubic weights on cells b-1 .. b+2, gain folded in.
            w0 = -t * (t - 1) * (t - 2) * g / 6
            w1 = (t * t - 1) * (t - 2) * g / 2
            w2 = -t * (t + 1) * (t - 2) * g / 2
            w3 = t * (t * t - 1) * g / 6
            # Reflect indices at both ends (the kernel is even about 0 and 180).
            c0 = b - 1
            if c0 < 0:
                c0 = -c0
            c1 = b
            c2 = b + 1
            c3 = b + 2
            if c3 > top:
                c3 = 2 * top - c3
            for j in range(n_taps):
                pos = base + j
                if pos >= n2:
                    pos -= n2
                kb = tap_w[i, j]
                row = &trains[m, pos, 0]
                row[c0] += kb * w0
                row[c1] += kb * w1
                row[c2] += kb * w2
                row[c3] += kb * w3
