"""Input/target pair generation and manifest-driven dataset builds.

For each scene the source clip is rendered twice through the array: once
at the scene yaw (recording for the compensated input) and once with the
array yawed further by the head rotation (recording for the aligned
target). Each recording is filtered by its configuration's filter bank in
the STFT domain and resynthesized; one shared peak gain scales both
signals of a pair so interaural and inter-signal level relations survive.

Datasets are a pure function of (master_seed, corpus, config): scenes use
per-index substreams, split assignment a dedicated substream, and the
manifest is assembled in scene-index order, so parallel builds are
byte-identical to serial ones.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrays import ArrayGeometry
from .audio import AudioBuffer, read_audio, resample, write_audio
from .bsm import (
    INPUT_COMPENSATED,
    TARGET_ALIGNED,
    BsmConfig,
    BsmFilterBank,
    RenderJob,
    build_job_filters,
    render_binaural,
)
from .hrtf import HrtfSet
from .render import simulate_recording
from .room import image_sources
from .scenes import SceneRanges, SceneSpec, sample_scene, scene_rng
from .stft import StftConfig, istft, stft

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_SCHEMA = 1
PAIR_PEAK = 0.9
SEGMENT_SECONDS = 2.0
RMS_FLOOR_DBFS = -45.0
# Substream index map: scene geometry uses the scene index directly;
# clip choice and split assignment get disjoint reserved ranges.
_SEGMENT_STREAM_BASE = 1 << 33
_SPLIT_STREAM = 1 << 34


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    bsm: BsmConfig = field(default_factory=BsmConfig)
    ranges: SceneRanges = field(default_factory=SceneRanges)
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)


@dataclass(frozen=True)
class SpeechSegment:
    path: str
    start: int
    n_samples: int

    @property
    def ref(self) -> str:
        return f"{Path(self.path).name}:{self.start}"


def segment_corpus(
    corpus_dir,
    sample_rate: int = 16000,
    seconds: float = SEGMENT_SECONDS,
    rms_floor_dbfs: float = RMS_FLOOR_DBFS,
) -> list[SpeechSegment]:
    """Index a directory of mono WAV clips into fixed-length segments.

    Clips are resampled to the working rate; segments quieter than the
    RMS floor are skipped so silent training pairs never occur.
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise DatasetError(f"corpus directory not found: {corpus_dir}")
    seg_len = int(round(seconds * sample_rate))
    floor = 10 ** (rms_floor_dbfs / 20)
    segments = []
    for path in sorted(root.glob("*.wav")):
        buf = read_audio(path)
        if buf.channels != 1:
            raise DatasetError(f"{path}: corpus clips must be mono")
        buf = resample(buf, sample_rate)
        x = buf.samples[0]
        for start in range(0, x.size - seg_len + 1, seg_len):
            seg = x[start : start + seg_len]
            if np.sqrt(np.mean(seg**2)) >= floor:
                segments.append(SpeechSegment(str(path), start, seg_len))
    if not segments:
        raise DatasetError(f"no usable {seconds:.0f}-s segments in {corpus_dir}")
    return segments


def load_segment(seg: SpeechSegment, sample_rate: int = 16000) -> AudioBuffer:
    buf = resample(read_audio(seg.path), sample_rate)
    return AudioBuffer(buf.samples[:1, seg.start : seg.start + seg.n_samples], sample_rate)


def generate_pair(
    scene: SceneSpec,
    speech: AudioBuffer,
    hrtf: HrtfSet,
    cfg: PipelineConfig = PipelineConfig(),
) -> tuple[AudioBuffer, AudioBuffer, dict, tuple[BsmFilterBank, BsmFilterBank]]:
    """Render the compensated input and aligned target for one scene.

    Returns (input, target, info, (input_bank, target_bank)); input and
    target share one peak gain, length, and sample rate.
    """
    if speech.channels != 1:
        raise DatasetError("source clip must be mono")
    fs = speech.sample_rate
    if fs != cfg.stft.sample_rate:
        raise DatasetError(f"clip rate {fs} != working rate {cfg.stft.sample_rate}")
    # The recording lives in the world frame (scene yaw realizes the DOA);
    # the filter design lives in the array frame, where the head rotation
    # is the only offset between steering and HRTF lookups.
    canonical = ArrayGeometry(cfg.geometry.mic_directions_deg, cfg.geometry.radius, 0.0)
    world = ArrayGeometry(
        cfg.geometry.mic_directions_deg, cfg.geometry.radius, scene.array_yaw_deg
    )
    images = image_sources(
        scene.room, scene.source_pos, scene.array_pos, max_delay=scene.room.t60
    )
    outputs = {}
    banks = {}
    for config_name, job in (
        (INPUT_COMPENSATED, RenderJob(INPUT_COMPENSATED, scene.rotation_deg)),
        (TARGET_ALIGNED, RenderJob(TARGET_ALIGNED, scene.rotation_deg)),
    ):
        rec_geom = world if config_name == INPUT_COMPENSATED else world.rotated(
            scene.rotation_deg
        )
        recording = simulate_recording(
            images, speech, rec_geom, speed_of_sound=scene.room.speed_of_sound
        )
        bank = build_job_filters(job, cfg.bsm, canonical, hrtf, cfg.stft)
        rendered = render_binaural(bank, stft(recording, cfg.stft))
        synthesized = istft(rendered, cfg.stft)
        # Pairs keep the source duration; the reverb tail beyond it is
        # dropped identically from input and target.
        outputs[config_name] = AudioBuffer(
            synthesized.samples[:, : speech.n_samples], fs
        )
        banks[config_name] = bank
    peak = max(
        np.max(np.abs(outputs[INPUT_COMPENSATED].samples)),
        np.max(np.abs(outputs[TARGET_ALIGNED].samples)),
    )
    gain = PAIR_PEAK / peak if peak > 0 else 1.0
    pair = tuple(
        AudioBuffer(outputs[name].samples * gain, fs)
        for name in (INPUT_COMPENSATED, TARGET_ALIGNED)
    )
    info = {
        "scene_id": scene.scene_id,
        "images": len(images),
        "reflection": images.reflection,
        "gain": gain,
    }
    return pair[0], pair[1], info, (banks[INPUT_COMPENSATED], banks[TARGET_ALIGNED])


def assign_splits(master_seed: int, n: int) -> list[str]:
    """Deterministic 80/10/10 split by scene; a scene never straddles splits."""
    n_train = int(np.floor(0.8 * n))
    n_val = int(np.floor(0.1 * n))
    perm = scene_rng(master_seed, _SPLIT_STREAM).permutation(n)
    labels = [""] * n
    for rank, idx in enumerate(perm):
        if rank < n_train:
            labels[idx] = "train"
        elif rank < n_train + n_val:
            labels[idx] = "val"
        else:
            labels[idx] = "test"
    return labels


_WORKER: dict = {}


def _init_worker(out_dir, cfg, hrtf) -> None:
    _WORKER.update(out_dir=Path(out_dir), cfg=cfg, hrtf=hrtf)


def _build_one(args) -> tuple[int, dict | None, str | None]:
    index, scene_dict, seg = args
    out_dir, cfg, hrtf = _WORKER["out_dir"], _WORKER["cfg"], _WORKER["hrtf"]
    scene = SceneSpec.from_dict(scene_dict)
    speech = load_segment(seg, cfg.stft.sample_rate)
    try:
        pair_in, pair_tgt, info, _ = generate_pair(scene, speech, hrtf, cfg)
    except Exception as exc:  # infeasible scene: skip and report
        return index, None, f"{scene.scene_id}: {exc}"
    split_dir = out_dir / scene.split
    split_dir.mkdir(parents=True, exist_ok=True)
    in_path = split_dir / f"{scene.scene_id}_input.wav"
    tgt_path = split_dir / f"{scene.scene_id}_target.wav"
    write_audio(in_path, pair_in)
    write_audio(tgt_path, pair_tgt)
    row = {
        "schema": MANIFEST_SCHEMA,
        "scene_id": scene.scene_id,
        "scene": scene.to_dict(),
        "input_path": str(in_path.relative_to(out_dir)),
        "target_path": str(tgt_path.relative_to(out_dir)),
        "rotation_deg": scene.rotation_deg,
        "split": scene.split,
        "images": info["images"],
    }
    return index, row, None


def build_dataset(
    master_seed: int,
    n_scenes: int,
    corpus_dir,
    out_dir,
    hrtf: HrtfSet,
    cfg: PipelineConfig = PipelineConfig(),
    jobs: int = 1,
) -> dict:
    """Sample scenes, render pairs, and write the JSON-lines manifest.

    Returns a summary dict (scene counts, split sizes, skip list). The
    output tree is out_dir/{train,val,test}/{scene_id}_{input,target}.wav
    plus out_dir/manifest.jsonl, byte-identical for a given seed, corpus,
    and config regardless of ``jobs``.
    """
    if n_scenes < 1:
        raise DatasetError("n_scenes must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    segments = segment_corpus(corpus_dir, cfg.stft.sample_rate)
    splits = assign_splits(master_seed, n_scenes)
    tasks = []
    for index in range(n_scenes):
        scene = sample_scene(master_seed, index, cfg.ranges)
        seg_rng = scene_rng(master_seed, _SEGMENT_STREAM_BASE + index)
        seg = segments[int(seg_rng.integers(len(segments)))]
        scene = scene.with_assignment(seg.ref, splits[index])
        tasks.append((index, scene.to_dict(), seg))

    if jobs > 1:
        with multiprocessing.Pool(jobs, _init_worker, (out_dir, cfg, hrtf)) as pool:
            results = pool.map(_build_one, tasks)
    else:
        _init_worker(out_dir, cfg, hrtf)
        results = [_build_one(t) for t in tasks]

    rows, skipped = [], []
    for _, row, err in sorted(results, key=lambda r: r[0]):
        if row is not None:
            rows.append(row)
        else:
            skipped.append(err)
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    split_sizes = {
        name: sum(1 for r in rows if r["split"] == name)
        for name in ("train", "val", "test")
    }
    return {
        "manifest": str(manifest_path),
        "scenes": len(rows),
        "skipped": len(skipped),
        "skipped_detail": skipped,
        "splits": split_sizes,
    }


def read_manifest(path) -> list[dict]:
    rows = []
    with open(path) as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                if row.get("schema") != MANIFEST_SCHEMA:
                    raise DatasetError(f"unsupported manifest schema {row.get('schema')!r}")
                rows.append(row)
    return rows
