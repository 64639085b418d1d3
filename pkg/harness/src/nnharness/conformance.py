"""Cross-implementation conformance gate.

Before training, the harness's differentiable loss math is checked
against the reference toolkit on a probe batch drawn from the manifest:
the reference values come from the ``bsmkit evaluate`` command-line
interface (per-item JSON report), so the two implementations only share
file formats. Training aborts if any component disagrees beyond the
relative tolerance.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import tempfile
from pathlib import Path

import torch

from .auditory import analyze
from .data import ManifestRow, load_wave
from .features import stft
from .losses import (
    auditory_binaural_losses,
    mag_stft_loss,
    si_sdr,
    stft_binaural_losses,
    stft_loss,
)

TOLERANCE = 1e-4


class ConformanceError(RuntimeError):
    pass


def harness_metrics(row: ManifestRow) -> dict:
    """All probe metrics in float64 through the torch implementations."""
    est = load_wave(row.input_path, torch.float64)[None]  # estimate = network input
    ref = load_wave(row.target_path, torch.float64)[None]
    ref_spec = stft(ref)
    est_spec = stft(est)
    si = si_sdr(ref, est)[0]
    cues_ref = analyze(ref)
    cues_est = analyze(est)
    aud = auditory_binaural_losses(cues_ref, cues_est)
    sb = stft_binaural_losses(ref_spec, est_spec)
    return {
        "si_sdr_left": float(si[0]),
        "si_sdr_right": float(si[1]),
        "l_stft": float(stft_loss(ref_spec, est_spec)),
        "l_mag_stft": float(mag_stft_loss(ref_spec, est_spec)),
        "l_ild": float(aud["l_ild"]),
        "l_ipd": float(aud["l_ipd"]),
        "l_ivs": float(aud["l_ivs"]),
        "l_ild_def": float(sb["l_ild_def"]),
        "l_ipd_def": float(sb["l_ipd_def"]),
    }


def reference_metrics(rows: list[ManifestRow], manifest_dir: Path) -> dict:
    """Per-item metrics from the reference CLI, keyed by scene id."""
    with tempfile.TemporaryDirectory() as tmp:
        est_dir = Path(tmp) / "est"
        est_dir.mkdir()
        for row in rows:
            shutil.copy(row.input_path, est_dir / f"{row.scene_id}.wav")
        out = Path(tmp) / "report"
        proc = subprocess.run(
            [
                "bsmkit", "evaluate", "--manifest", str(manifest_dir),
                "--est", str(est_dir), "--out", str(out), "--split", "all",
                "--report-format", "json",
            ],
            capture_output=True, text=True,
        )
        if proc.returncode != 0:
            raise ConformanceError(f"reference CLI failed: {proc.stderr}")
        report = json.loads(out.with_suffix(".json").read_text())
    return {item["scene_id"]: item for item in report["items"]}


def run_gate(rows: list[ManifestRow], manifest_dir, tolerance: float = TOLERANCE) -> dict:
    """Compare probe metrics; returns the worst relative errors per metric."""
    reference = reference_metrics(rows, Path(manifest_dir))
    worst: dict[str, float] = {}
    for row in rows:
        mine = harness_metrics(row)
        ref = reference[row.scene_id]
        for key, value in mine.items():
            denom = max(abs(ref[key]), 1e-9)
            rel = abs(value - ref[key]) / denom
            worst[key] = max(worst.get(key, 0.0), rel)
    failures = {k: v for k, v in worst.items() if v > tolerance}
    if failures:
        raise ConformanceError(
            f"loss conformance gate failed (tolerance {tolerance}): {failures}"
        )
    return worst


def run_gate_subprocess(manifest_dir, items: int = 2) -> dict:
    """Run the gate in a child interpreter so its float64 peak memory is
    returned to the system before training allocates; aborts on failure."""
    proc = subprocess.run(
        [
            "bsm-harness", "gate", "--manifest", str(manifest_dir),
            "--items", str(items), "--split", "train",
        ],
        capture_output=True, text=True,
    )
    if proc.returncode != 0:
        raise ConformanceError(f"conformance gate failed: {proc.stderr.strip()}")
    return json.loads(proc.stdout)["worst_rel"]
