"""Manifest-driven dataset access.

Reads the JSON-lines manifest and WAV tree produced by the dataset
pipeline verbatim; every item is an (input, target) float waveform pair
at 16 kHz, cropped to a whole number of STFT hops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from scipy.io import wavfile

from .features import HOP


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    scene_id: str
    input_path: Path
    target_path: Path
    rotation_deg: float
    split: str


def read_manifest(path) -> list[ManifestRow]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    root = path.parent
    rows = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        rows.append(
            ManifestRow(
                scene_id=obj["scene_id"],
                input_path=root / obj["input_path"],
                target_path=root / obj["target_path"],
                rotation_deg=obj["rotation_deg"],
                split=obj["split"],
            )
        )
    if not rows:
        raise DataError(f"empty manifest: {path}")
    return rows


def load_wave(path, dtype=torch.float32) -> torch.Tensor:
    rate, data = wavfile.read(path)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DataError(f"{path}: expected a 2-channel WAV")
    return torch.as_tensor(data.T.copy()).to(dtype)


class PairDataset(torch.utils.data.Dataset):
    """(input, target) pairs; optional fixed-length random crops for training.

    Crops are deterministic in (seed, index, epoch) so runs reproduce; call
    ``set_epoch`` per epoch to advance the crop schedule.
    """

    def __init__(self, rows: list[ManifestRow], dtype=torch.float32,
                 crop_seconds: float | None = None, seed: int = 0):
        self.rows = rows
        self.dtype = dtype
        self.crop = int(crop_seconds * 16000) if crop_seconds else None
        if self.crop:
            self.crop -= self.crop % HOP
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, idx: int):
        row = self.rows[idx]
        x = load_wave(row.input_path, self.dtype)
        y = load_wave(row.target_path, self.dtype)
        t = min(x.shape[-1], y.shape[-1])
        t -= t % HOP
        x, y = x[..., :t], y[..., :t]
        if self.crop and self.crop < t:
            span = (t - self.crop) // HOP
            g = torch.Generator()
            g.manual_seed(hash((self.seed, idx, self.epoch)) & 0x7FFFFFFF)
            start = int(torch.randint(0, span + 1, (1,), generator=g)) * HOP
            x = x[..., start : start + self.crop]
            y = y[..., start : start + self.crop]
        return x, y, row.scene_id


def split_rows(rows: list[ManifestRow], split: str) -> list[ManifestRow]:
    out = [r for r in rows if split == "all" or r.split == split]
    if not out:
        raise DataError(f"no rows in split {split!r}")
    return out


def make_loader(rows, batch_size: int, shuffle: bool, seed: int = 0,
                crop_seconds: float | None = None):
    ds = PairDataset(rows, crop_seconds=crop_seconds, seed=seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return torch.utils.data.DataLoader(
        ds, batch_size=batch_size, shuffle=shuffle, generator=gen if shuffle else None,
        num_workers=0, drop_last=False,
    )
