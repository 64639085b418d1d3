"""Checkpoint inference: one corrected 2-channel float32 WAV per manifest
row, named <scene_id>.wav so the reference evaluate command can score the
directory directly."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

from .data import read_manifest, split_rows
from .features import istft, pack_ri, stft, unpack_ri
from .model import BinauralCorrector, ModelSpec


def load_model(checkpoint) -> BinauralCorrector:
    state = torch.load(checkpoint, map_location="cpu", weights_only=True)
    model = BinauralCorrector(ModelSpec(**state["spec"]))
    model.load_state_dict(state["model"])
    model.eval()
    return model


def infer(checkpoint, manifest, out_dir, split: str = "test") -> dict:
    model = load_model(checkpoint)
    rows = split_rows(read_manifest(manifest), split)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with torch.no_grad():
        for row in rows:
            from .data import load_wave

            x = load_wave(row.input_path)[None]
            t = x.shape[-1] - x.shape[-1] % 256
            x = x[..., :t]
            est = istft(unpack_ri(model(pack_ri(stft(x)))), t)[0]
            data = est.numpy().T.astype(np.float32)
            if not np.all(np.isfinite(data)):
                raise RuntimeError(f"non-finite output for {row.scene_id}")
            path = out / f"{row.scene_id}.wav"
            wavfile.write(path, 16000, data)
            written.append(str(path))
    return {"written": len(written), "out": str(out)}
