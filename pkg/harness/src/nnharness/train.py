"""Training loop: Adam, per-epoch checkpoints, JSON log of every loss
component, validation-plateau learning-rate halving after the configured
epoch, and the conformance gate before the first step."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .conformance import run_gate_subprocess
from .data import make_loader, read_manifest, split_rows
from .features import pack_ri, stft, unpack_ri
from .losses import RunningScaler, training_loss
from .model import BinauralCorrector, ModelSpec


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 8
    micro_batch: int = 0  # 0: one pass per batch; else gradient accumulation
    crop_seconds: float = 0.0  # 0: full-length training segments
    lr: float = 1e-3
    lr_decay_after_epoch: int = 30
    lr_plateau_epochs: int = 3
    lr_factor: float = 0.5
    loss_variant: str = "aud"  # "aud" | "stft"
    seed: int = 0
    weights: dict = field(
        default_factory=lambda: {
            "si_sdr": 1.0, "stft": 1.0, "mag_stft": 0.5,
            "ild": 1.0, "ipd": 1.0, "ivs": 0.5,
        }
    )
    skip_gate: bool = False

    def __post_init__(self):
        if self.loss_variant not in ("aud", "stft"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")


def _forward_loss(model, x, y, cfg, scaler):
    from .features import istft

    x_spec = stft(x)
    with torch.no_grad():
        y_spec = stft(y)
    est_spec = unpack_ri(model(pack_ri(x_spec)))
    est_wave = istft(est_spec, x.shape[-1])
    return training_loss(
        y, est_wave, y_spec, est_spec, cfg.loss_variant, scaler, cfg.weights
    )


def apply_lr_schedule(optimizer, epoch: int, plateau: int, cfg: TrainConfig) -> int:
    """Halve the learning rate after the configured epoch once validation
    has not improved for the configured number of epochs; returns the
    plateau counter (reset on decay)."""
    if epoch > cfg.lr_decay_after_epoch and plateau >= cfg.lr_plateau_epochs:
        for group in optimizer.param_groups:
            group["lr"] *= cfg.lr_factor
        return 0
    return plateau


def _epoch_pass(model, loader, cfg, scaler, optimizer=None):
    totals, comps, n = 0.0, {}, 0
    micro = cfg.micro_batch or cfg.batch_size
    for x, y, _ in loader:
        if optimizer is not None:
            optimizer.zero_grad()
        chunks = max(1, -(-x.shape[0] // micro))
        for c in range(chunks):
            xs = x[c * micro : (c + 1) * micro]
            ys = y[c * micro : (c + 1) * micro]
            if xs.shape[0] == 0:
                continue
            loss, raw = _forward_loss(model, xs, ys, cfg, scaler)
            if optimizer is not None:
                (loss * (xs.shape[0] / x.shape[0])).backward()
            totals += float(loss.detach()) * xs.shape[0]
            for k, v in raw.items():
                comps[k] = comps.get(k, 0.0) + v * xs.shape[0]
            n += xs.shape[0]
        if optimizer is not None:
            optimizer.step()
    return totals / n, {k: v / n for k, v in comps.items()}


def train(manifest, out_dir, cfg: TrainConfig = TrainConfig(),
          model_spec: ModelSpec = ModelSpec()) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    rows = read_manifest(manifest)
    train_rows = split_rows(rows, "train")
    try:
        val_rows = split_rows(rows, "val")
    except Exception:
        val_rows = train_rows[:1]

    gate = None
    if not cfg.skip_gate:
        manifest_dir = Path(manifest) if Path(manifest).is_dir() else Path(manifest).parent
        gate = run_gate_subprocess(manifest_dir)

    model = BinauralCorrector(model_spec)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scaler = RunningScaler()
    train_loader = make_loader(
        train_rows, cfg.batch_size, shuffle=True, seed=cfg.seed,
        crop_seconds=cfg.crop_seconds or None,
    )
    val_loader = make_loader(
        val_rows, cfg.batch_size, shuffle=False,
        crop_seconds=cfg.crop_seconds or None,
    )

    log_path = out / "training_log.jsonl"
    history = []
    best_val = float("inf")
    plateau = 0
    with open(log_path, "w") as log:
        if gate is not None:
            log.write(json.dumps({"event": "conformance", "worst_rel": gate}) + "\n")
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.time()
            model.train()
            train_loader.dataset.set_epoch(epoch)
            train_total, train_comps = _epoch_pass(model, train_loader, cfg, scaler, optimizer)
            model.eval()
            with torch.no_grad():
                val_total, val_comps = _epoch_pass(model, val_loader, cfg, scaler)
            if val_total < best_val - 1e-6:
                best_val = val_total
                plateau = 0
                torch.save(
                    {"model": model.state_dict(), "spec": asdict(model_spec)},
                    out / "best.pt",
                )
            else:
                plateau += 1
            plateau = apply_lr_schedule(optimizer, epoch, plateau, cfg)
            row = {
                "epoch": epoch,
                "train_loss": train_total,
                "val_loss": val_total,
                "lr": optimizer.param_groups[0]["lr"],
                "seconds": round(time.time() - t0, 2),
                "train_components": train_comps,
                "val_components": val_comps,
            }
            history.append(row)
            log.write(json.dumps(row) + "\n")
            log.flush()
            torch.save(
                {"model": model.state_dict(), "spec": asdict(model_spec),
                 "epoch": epoch, "scaler": scaler.state_dict()},
                out / f"epoch_{epoch:03d}.pt",
            )
    torch.save({"model": model.state_dict(), "spec": asdict(model_spec)}, out / "last.pt")
    return {"log": str(log_path), "epochs": len(history), "history": history,
            "parameters": model.parameter_count()}
