"""Command-line front end.

Subcommands: ``dataset`` (build a manifest-driven input/target dataset),
``render`` (one scene spec to WAV pairs plus filter caches), ``evaluate``
(score an estimate directory against references), ``cues`` (dump auditory
cue maps for a WAV pair), and ``filters`` (dump the filter banks of a
scene). Exit codes: 0 success, 1 internal error, 2 user input error;
errors are written as JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import read_audio
from .auditory import analyze, write_cue_maps
from .bsm import (
    INPUT_COMPENSATED,
    TARGET_ALIGNED,
    RenderJob,
    build_job_filters,
    save_filterbank,
)
from .config import ConfigError, load_run_config
from .dataset import (
    MANIFEST_NAME,
    DatasetError,
    build_dataset,
    generate_pair,
    read_manifest,
)
from .hrtf import HrtfError, analytic_sphere_set, load_hrir_pack
from .losses import auditory_binaural_loss
from .report import EvalItem, evaluate_pairs
from .scenes import SceneError, SceneSpec


class UserError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _emit_error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")


def _load_hrtf(spec: str, run_cfg):
    if spec == "analytic":
        return analytic_sphere_set(
            head_radius=run_cfg.head_radius, sample_rate=run_cfg.stft.sample_rate
        )
    path = Path(spec)
    if not path.is_file():
        raise UserError("HRTF_NOT_FOUND", f"HRIR pack not found: {spec}")
    return load_hrir_pack(path, run_cfg.stft.sample_rate)


def _load_scene(path: str) -> SceneSpec:
    p = Path(path)
    if not p.is_file():
        raise UserError("SCENE_NOT_FOUND", f"scene spec not found: {path}")
    try:
        return SceneSpec.from_dict(json.loads(p.read_text()))
    except (json.JSONDecodeError, KeyError, SceneError, ValueError) as exc:
        raise UserError("SCENE_INVALID", f"invalid scene spec {path}: {exc}")


def cmd_dataset(args) -> int:
    run_cfg = load_run_config(args.config)
    if not Path(args.corpus).is_dir():
        raise UserError("CORPUS_NOT_FOUND", f"corpus directory not found: {args.corpus}")
    hrtf = _load_hrtf(args.hrir, run_cfg)
    summary = build_dataset(
        args.seed, args.scenes, args.corpus, args.out, hrtf,
        run_cfg.pipeline(), jobs=args.jobs,
    )
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_render(args) -> int:
    run_cfg = load_run_config(args.config)
    scene = _load_scene(args.scene)
    if args.rotation_deg is not None:
        import dataclasses

        scene = dataclasses.replace(scene, rotation_deg=args.rotation_deg)
    hrtf = _load_hrtf(args.hrir, run_cfg)
    clip = Path(args.clip)
    if not clip.is_file():
        raise UserError("CLIP_NOT_FOUND", f"source clip not found: {args.clip}")
    from .audio import resample, write_audio

    speech = resample(read_audio(clip, expect_channels=1), run_cfg.stft.sample_rate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pair_in, pair_tgt, info, banks = generate_pair(
        scene, speech, hrtf, run_cfg.pipeline()
    )
    write_audio(out / f"{scene.scene_id}_input.wav", pair_in)
    write_audio(out / f"{scene.scene_id}_target.wav", pair_tgt)
    save_filterbank(out / f"{scene.scene_id}_input.bank", banks[0])
    save_filterbank(out / f"{scene.scene_id}_target.bank", banks[1])
    diff = float(
        np.max(np.abs(pair_in.samples - pair_tgt.samples))
        / max(np.max(np.abs(pair_tgt.samples)), 1e-300)
    )
    info.update(
        {"out": str(out), "duration_s": pair_in.duration, "input_target_rel_diff": diff}
    )
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    run_cfg = load_run_config(args.config)
    manifest_path = Path(args.manifest)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise UserError("MANIFEST_NOT_FOUND", f"manifest not found: {args.manifest}")
    rows = read_manifest(manifest_path)
    rows = [r for r in rows if args.split == "all" or r["split"] == args.split]
    if not rows:
        raise UserError("EMPTY_SPLIT", f"no manifest rows in split {args.split!r}")
    ref_root = Path(args.ref) if args.ref else manifest_path.parent
    est_root = Path(args.est)
    items, missing = [], []
    for row in rows:
        est_path = est_root / f"{row['scene_id']}.wav"
        if not est_path.is_file():
            missing.append(row["scene_id"])
            continue
        ref = read_audio(ref_root / row["target_path"], expect_channels=2)
        est = read_audio(est_path, expect_channels=2)
        items.append(EvalItem(ref, est, row["scene_id"], row["rotation_deg"]))
    if not items:
        raise UserError("NO_ESTIMATES", f"no estimate WAVs found under {est_root}")
    for scene_id in missing:
        sys.stderr.write(f"warning: missing estimate for {scene_id}\n")
    report = evaluate_pairs(
        items,
        weights=run_cfg.loss_weights,
        stft_cfg=run_cfg.stft,
        auditory_cfg=run_cfg.auditory,
        cutoff_hz=run_cfg.cutoff_hz,
        missing=missing,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(report.to_json())
    out.with_suffix(".csv").write_text(report.to_csv())
    print(report.to_csv() if args.report_format == "csv" else report.to_json())
    return 0


def cmd_cues(args) -> int:
    run_cfg = load_run_config(args.config)
    ref = read_audio(args.reference, expect_channels=2)
    est = read_audio(args.estimate, expect_channels=2)
    maps_ref = analyze(ref, run_cfg.auditory)
    maps_est = analyze(est, run_cfg.auditory)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cue_maps(out / "reference.cues", maps_ref)
    write_cue_maps(out / "estimate.cues", maps_est)
    parts = auditory_binaural_loss(maps_ref, maps_est, run_cfg.loss_weights)
    print(
        json.dumps(
            {"l_ild": parts.l_ild, "l_ipd": parts.l_ipd, "l_ivs": parts.l_ivs,
             "combined": parts.combined, "out": str(out)},
            sort_keys=True,
        )
    )
    return 0


def cmd_filters(args) -> int:
    run_cfg = load_run_config(args.config)
    scene = _load_scene(args.scene)
    hrtf = _load_hrtf(args.hrir, run_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, config in (("input", INPUT_COMPENSATED), ("target", TARGET_ALIGNED)):
        bank = build_job_filters(
            RenderJob(config, scene.rotation_deg), run_cfg.bsm(),
            run_cfg.geometry(), hrtf, run_cfg.stft,
        )
        path = out / f"{scene.scene_id}_{name}.bank"
        save_filterbank(path, bank)
        summary[name] = {
            "path": str(path),
            "magls_bins": int(bank.is_magls.sum()),
            "mean_magls_iterations": float(bank.iterations[bank.is_magls].mean()),
            "mean_residual": float(bank.residual.mean()),
        }
    print(json.dumps(summary, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsmkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build an input/target dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hrir", default="analytic", help="HRIR pack path or 'analytic'")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("render", help="render one scene spec to WAV pairs")
    p.add_argument("--config", default=None)
    p.add_argument("--scene", required=True, help="SceneSpec JSON file")
    p.add_argument("--clip", required=True, help="mono source WAV")
    p.add_argument("--out", required=True)
    p.add_argument("--hrir", default="analytic")
    p.add_argument("--rotation-deg", type=float, default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evaluate", help="score estimates against references")
    p.add_argument("--config", default=None)
    p.add_argument("--manifest", required=True)
    p.add_argument("--est", required=True, help="directory of <scene_id>.wav estimates")
    p.add_argument("--ref", default=None, help="dataset root (defaults to manifest dir)")
    p.add_argument("--out", required=True, help="report path prefix (.csv/.json added)")
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--report-format", default="csv", choices=("csv", "json"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cues", help="dump auditory cue maps for a WAV pair")
    p.add_argument("--config", default=None)
    p.add_argument("reference")
    p.add_argument("estimate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cues)

    p = sub.add_parser("filters", help="dump the BSM filter banks of a scene")
    p.add_argument("--config", default=None)
    p.add_argument("--scene", required=True)
    p.add_argument("--hrir", default="analytic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filters)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        _emit_error(exc.code, str(exc))
        return 2
    except (ConfigError, DatasetError, SceneError, HrtfError, FileNotFoundError) as exc:
        _emit_error(type(exc).__name__.upper(), str(exc))
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        _emit_error("INTERNAL", f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
