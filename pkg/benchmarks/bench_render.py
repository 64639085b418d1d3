#!/usr/bin/env python3
"""Benchmark the compiled deposit kernel against the NumPy fallback.

Renders the multichannel frequency response of a mid-size reverberant
room with both kernel implementations and reports wall time and
agreement. Usage: python benchmarks/bench_render.py [--t60 0.5]
"""

import argparse
import time

import numpy as np

import bsmkit.render as render_mod
from bsmkit import _kernels_np
from bsmkit._backend import KERNEL_BACKEND, deposit_trains
from bsmkit.arrays import ArrayGeometry
from bsmkit.render import render_frequency_response
from bsmkit.room import RoomSpec, image_sources


def run(t60: float) -> None:
    room = RoomSpec((8.0, 8.0, 3.5), t60)
    images = image_sources(room, (5.0, 4.9, 1.7), (2.9, 3.2, 1.7), t60)
    geom = ArrayGeometry()
    n_rir = int(t60 * 16000) + 16
    print(f"room 8x8x3.5, t60={t60}s: {len(images)} image sources, {n_rir} taps")

    results = {}
    for name, kernel in (("compiled", deposit_trains), ("numpy", _kernels_np.deposit_trains)):
        if name == "compiled" and KERNEL_BACKEND != "cython":
            print("compiled kernel not built; skipping")
            continue
        render_mod.deposit_trains = kernel
        try:
            t0 = time.perf_counter()
            h, _ = render_frequency_response(images, geom, 16000, n_rir, method="grid")
            dt = time.perf_counter() - t0
        finally:
            render_mod.deposit_trains = deposit_trains
        results[name] = (dt, h)
        print(f"  {name:>9}: {dt:6.2f} s")
    if len(results) == 2:
        (ta, ha), (tb, hb) = results["compiled"], results["numpy"]
        rel = np.max(np.abs(ha - hb)) / np.max(np.abs(ha))
        print(f"  speedup {tb / ta:.1f}x, max relative difference {rel:.2e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--t60", type=float, default=0.5)
    run(parser.parse_args().t60)
