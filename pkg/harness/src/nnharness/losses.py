"""Differentiable loss suite: weighted SI-SDR, complex and magnitude STFT
terms split at 1.5 kHz, the auditory binaural loss (ILD/IPD/IVS mean
squared errors with wrapped phase differences), the STFT-defined binaural
alternative, and running-average component scaling."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .auditory import CueMaps, analyze
from .features import FFT_LEN, N_BINS, SAMPLE_RATE

EPS = 1e-8
CUTOFF_HZ = 1500.0
CLAMP_DB = 120.0


def bin_freqs(device=None) -> torch.Tensor:
    return torch.arange(N_BINS, device=device) * (SAMPLE_RATE / FFT_LEN)


def si_sdr(ref: torch.Tensor, est: torch.Tensor) -> torch.Tensor:
    """Scale-invariant SDR in dB over the last axis, clamped to +-120."""
    alpha = (est * ref).sum(-1, keepdim=True) / (ref * ref).sum(-1, keepdim=True)
    proj = alpha * ref
    num = (proj * proj).sum(-1)
    den = ((proj - est) ** 2).sum(-1)
    ratio = num / den.clamp_min(torch.finfo(est.dtype).tiny)
    return (10.0 * torch.log10(ratio)).clamp(-CLAMP_DB, CLAMP_DB)


def weighted_si_sdr_loss(
    ref: torch.Tensor, est: torch.Tensor, ear_weights_rl=(2.0 / 3.0, 1.0 / 3.0)
) -> torch.Tensor:
    """-(w_r SI-SDR_right + w_l SI-SDR_left) for (..., 2, T) pairs."""
    values = si_sdr(ref, est)  # (..., 2)
    w_r, w_l = ear_weights_rl
    return -(w_r * values[..., 1] + w_l * values[..., 0]).mean()


def stft_loss(ref_spec: torch.Tensor, est_spec: torch.Tensor) -> torch.Tensor:
    """Mean |Re diff| + |Im diff| over cells below the cutoff; specs (B, 2, F, T)."""
    region = bin_freqs(ref_spec.device) < CUTOFF_HZ
    d = ref_spec[:, :, region] - est_spec[:, :, region]
    return (d.real.abs() + d.imag.abs()).mean()


def mag_stft_loss(ref_spec: torch.Tensor, est_spec: torch.Tensor) -> torch.Tensor:
    """Log-magnitude L1 mean plus spectral convergence over bins >= cutoff."""
    region = bin_freqs(ref_spec.device) >= CUTOFF_HZ
    rm = ref_spec[:, :, region].abs()
    em = est_spec[:, :, region].abs()
    log_term = (torch.log(rm + EPS) - torch.log(em + EPS)).abs().mean()
    conv = torch.linalg.vector_norm(rm - em) / torch.linalg.vector_norm(rm).clamp_min(EPS)
    return log_term + conv


def wrap_angle(x: torch.Tensor) -> torch.Tensor:
    return torch.atan2(torch.sin(x), torch.cos(x))


def auditory_binaural_losses(ref_cues: CueMaps, est_cues: CueMaps) -> dict:
    return {
        "l_ild": ((ref_cues.ild - est_cues.ild) ** 2).mean(),
        "l_ipd": (wrap_angle(ref_cues.ipd - est_cues.ipd) ** 2).mean(),
        "l_ivs": ((ref_cues.ivs - est_cues.ivs) ** 2).mean(),
    }


def stft_binaural_losses(ref_spec: torch.Tensor, est_spec: torch.Tensor) -> dict:
    """Directly defined ILD/IPD mean squared errors over all cells."""

    def ild_ipd(spec):
        left, right = spec[:, 0], spec[:, 1]
        ild = 20.0 * torch.log10((left.abs() + EPS) / (right.abs() + EPS))
        ipd = torch.angle(left * torch.conj(right))
        return ild, ipd

    ild_r, ipd_r = ild_ipd(ref_spec)
    ild_e, ipd_e = ild_ipd(est_spec)
    return {
        "l_ild_def": ((ild_r - ild_e) ** 2).mean(),
        "l_ipd_def": (wrap_angle(ipd_r - ipd_e) ** 2).mean(),
    }


@dataclass
class RunningScaler:
    """Exponential running averages scaling each loss component."""

    decay: float = 0.99
    floor: float = 1e-8
    ema: dict = field(default_factory=dict)

    def scale(self, components: dict) -> dict:
        out = {}
        for name, value in components.items():
            v = float(value.detach())
            self.ema[name] = (
                v if name not in self.ema else self.decay * self.ema[name] + (1 - self.decay) * v
            )
            # Magnitude in the divisor: sign-carrying components (negated
            # SI-SDR) keep their sign and direction.
            out[name] = value / max(abs(self.ema[name]), self.floor)
        return out

    def state_dict(self) -> dict:
        return dict(self.ema)

    def load_state_dict(self, state: dict) -> None:
        self.ema = dict(state)


def training_loss(
    ref_wave: torch.Tensor,
    est_wave: torch.Tensor,
    ref_spec: torch.Tensor,
    est_spec: torch.Tensor,
    variant: str,
    scaler: RunningScaler,
    weights: dict,
) -> tuple[torch.Tensor, dict]:
    """Combined signal-level plus binaural loss with running-average scaling."""
    components = {
        "si_sdr": weighted_si_sdr_loss(ref_wave, est_wave),
        "stft": stft_loss(ref_spec, est_spec),
        "mag_stft": mag_stft_loss(ref_spec, est_spec),
    }
    if variant == "aud":
        ref_cues = analyze(ref_wave)
        est_cues = analyze(est_wave)
        parts = auditory_binaural_losses(ref_cues, est_cues)
        components.update({"ild": parts["l_ild"], "ipd": parts["l_ipd"], "ivs": parts["l_ivs"]})
    elif variant == "stft":
        parts = stft_binaural_losses(ref_spec, est_spec)
        components.update({"ild": parts["l_ild_def"], "ipd": parts["l_ipd_def"]})
    else:
        raise ValueError(f"unknown loss variant {variant!r}")
    scaled = scaler.scale(components)
    total = sum(weights[name] * scaled[name] for name in scaled)
    raw = {name: float(value.detach()) for name, value in components.items()}
    return total, raw
