"""Metric evaluation over (reference, estimate) pairs and report assembly.

``evaluate_pairs`` scores each pair with the full metric suite (SI-SDR
with equal ear weighting, STFT losses, auditory binaural losses) and
aggregates arithmetic means overall, per ear, and per head-rotation bin
(21-30, 31-40, 41-50, 51-60 degrees, by the floored rotation angle).
Reports serialize to JSON and to CSV with the fixed column order
``group,n,si_sdr,l_stft,l_mag_stft,l_ild,l_ipd,l_ivs``; per-ear rows
carry only the signal-level columns.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .auditory import AuditoryConfig, analyze
from .losses import (
    LossError,
    LossWeights,
    auditory_binaural_loss,
    mag_stft_loss,
    si_sdr,
    stft_binaural_loss,
    stft_loss,
)
from .stft import ComplexSpectrogram, StftConfig, stft

ROTATION_BINS = ((21, 30), (31, 40), (41, 50), (51, 60))
CSV_COLUMNS = ("group", "n", "si_sdr", "l_stft", "l_mag_stft", "l_ild", "l_ipd", "l_ivs")


@dataclass(frozen=True)
class EvalItem:
    reference: AudioBuffer
    estimate: AudioBuffer
    scene_id: str
    rotation_deg: float | None = None


@dataclass
class MetricReport:
    items: list = field(default_factory=list)
    groups: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    def group(self, name: str) -> dict:
        for row in self.groups:
            if row["group"] == name:
                return row
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"items": self.items, "groups": self.groups, "missing": self.missing},
            indent=2,
            sort_keys=True,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.groups:
            writer.writerow(
                ["" if row.get(c) is None else row.get(c) for c in CSV_COLUMNS]
            )
        return buf.getvalue()


def _single_ear_spec(spec: ComplexSpectrogram, ear: int) -> ComplexSpectrogram:
    return ComplexSpectrogram(spec.bins[:, :, ear : ear + 1], spec.config, spec.signal_len)


def score_pair(
    ref: AudioBuffer,
    est: AudioBuffer,
    stft_cfg: StftConfig,
    auditory_cfg: AuditoryConfig,
    weights: LossWeights,
    cutoff_hz: float = 1500.0,
) -> dict:
    """All metrics for one pair; per-ear signal metrics included."""
    if ref.channels != 2 or est.channels != 2:
        raise LossError("evaluation expects binaural (2-channel) buffers")
    if ref.n_samples != est.n_samples or ref.sample_rate != est.sample_rate:
        raise LossError("reference/estimate geometry mismatch")
    ref_spec = stft(ref, stft_cfg)
    est_spec = stft(est, stft_cfg)
    si_l = si_sdr(ref.samples[0], est.samples[0])
    si_r = si_sdr(ref.samples[1], est.samples[1])
    w_r, w_l = weights.ear_weights_rl
    cues_ref = analyze(ref, auditory_cfg)
    cues_est = analyze(est, auditory_cfg)
    binaural = auditory_binaural_loss(cues_ref, cues_est, weights)
    stft_bin = stft_binaural_loss(ref_spec, est_spec, weights)
    out = {
        "si_sdr": w_r * si_r + w_l * si_l,
        "si_sdr_left": si_l,
        "si_sdr_right": si_r,
        "l_stft": stft_loss(ref_spec, est_spec, cutoff_hz),
        "l_mag_stft": mag_stft_loss(ref_spec, est_spec, cutoff_hz),
        "l_ild": binaural.l_ild,
        "l_ipd": binaural.l_ipd,
        "l_ivs": binaural.l_ivs,
        # STFT-defined binaural values; per-item diagnostics only, not part
        # of the fixed CSV group schema.
        "l_ild_def": stft_bin.l_ild,
        "l_ipd_def": stft_bin.l_ipd,
    }
    for ear, name in ((0, "left"), (1, "right")):
        out[f"l_stft_{name}"] = stft_loss(
            _single_ear_spec(ref_spec, ear), _single_ear_spec(est_spec, ear), cutoff_hz
        )
        out[f"l_mag_stft_{name}"] = mag_stft_loss(
            _single_ear_spec(ref_spec, ear), _single_ear_spec(est_spec, ear), cutoff_hz
        )
    return out


def _mean_row(name: str, rows: list, keys: dict) -> dict:
    out = {"group": name, "n": len(rows)}
    for col, src in keys.items():
        out[col] = float(np.mean([r[src] for r in rows])) if src else None
    return out


def rotation_bin_label(rotation_deg: float) -> str | None:
    f = int(np.floor(rotation_deg))
    for lo, hi in ROTATION_BINS:
        if lo <= f <= hi:
            return f"rot:{lo}-{hi}"
    return None


def evaluate_pairs(
    items: list[EvalItem],
    weights: LossWeights | None = None,
    stft_cfg: StftConfig | None = None,
    auditory_cfg: AuditoryConfig | None = None,
    cutoff_hz: float = 1500.0,
    missing: list | None = None,
) -> MetricReport:
    """Score every pair and aggregate overall / per-ear / per-rotation-bin."""
    if not items:
        raise LossError("empty evaluation list")
    weights = weights or LossWeights.evaluation()
    stft_cfg = stft_cfg or StftConfig()
    auditory_cfg = auditory_cfg or AuditoryConfig()
    report = MetricReport(missing=list(missing or []))
    for item in items:
        row = score_pair(item.reference, item.estimate, stft_cfg, auditory_cfg,
                         weights, cutoff_hz)
        row["scene_id"] = item.scene_id
        row["rotation_deg"] = item.rotation_deg
        report.items.append(row)

    full_cols = {
        "si_sdr": "si_sdr", "l_stft": "l_stft", "l_mag_stft": "l_mag_stft",
        "l_ild": "l_ild", "l_ipd": "l_ipd", "l_ivs": "l_ivs",
    }
    report.groups.append(_mean_row("overall", report.items, full_cols))
    for ear in ("left", "right"):
        report.groups.append(
            _mean_row(
                f"ear:{ear}", report.items,
                {"si_sdr": f"si_sdr_{ear}", "l_stft": f"l_stft_{ear}",
                 "l_mag_stft": f"l_mag_stft_{ear}", "l_ild": None, "l_ipd": None,
                 "l_ivs": None},
            )
        )
    for lo, hi in ROTATION_BINS:
        label = f"rot:{lo}-{hi}"
        rows = [
            r for r in report.items
            if r["rotation_deg"] is not None
            and rotation_bin_label(r["rotation_deg"]) == label
        ]
        if rows:
            report.groups.append(_mean_row(label, rows, full_cols))
    return report
