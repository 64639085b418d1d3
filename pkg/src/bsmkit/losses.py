"""Signal-level and binaural loss functions.

Channel order is (left, right) throughout the package. The SI-SDR ear
weighting follows the far-ear convention of rightward rotations: the
right ear is the degraded one and carries weight 2/3 during training;
evaluation weights both ears equally.

Frequency partitions match the filter-bank crossover: the complex-L1
STFT loss covers bins strictly below the cutoff, the log-magnitude plus
spectral-convergence loss covers bins at and above it. All IPD-style
losses use the wrapped shortest-arc difference; a plain difference across
the +-pi seam would dominate the mean squared error spuriously.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .auditory import AuditoryCueMaps
from .stft import ComplexSpectrogram

EPS_SPECTRUM = 1e-8
SI_SDR_CLAMP_DB = 120.0


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Component weights: signal (alpha, beta, gamma), auditory binaural
    (delta, lam, kappa), STFT binaural (delta_p, lambda_p), and the
    (right, left) SI-SDR ear weighting."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    delta: float = 1.0
    lam: float = 1.0
    kappa: float = 0.5
    delta_p: float = 1.0
    lambda_p: float = 1.0
    ear_weights_rl: tuple[float, float] = (2.0 / 3.0, 1.0 / 3.0)

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma, self.delta, self.lam,
                self.kappa, self.delta_p, self.lambda_p, *self.ear_weights_rl)
        if any(v < 0 for v in vals):
            raise LossError("loss weights must be non-negative")

    @classmethod
    def training(cls) -> "LossWeights":
        return cls()

    @classmethod
    def evaluation(cls) -> "LossWeights":
        return cls(ear_weights_rl=(0.5, 0.5))


def si_sdr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Scale-invariant SDR in dB, clamped to +-120.

    The estimate is projected onto the reference; the ratio of projection
    energy to residual energy is returned in dB.
    """
    ref = np.asarray(reference, dtype=np.float64).ravel()
    est = np.asarray(estimate, dtype=np.float64).ravel()
    if ref.size != est.size:
        raise LossError(f"length mismatch {ref.size} != {est.size}")
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise LossError("all-zero reference")
    proj = (float(est @ ref) / ref_energy) * ref
    resid = proj - est
    num = float(proj @ proj)
    den = float(resid @ resid)
    if num == 0.0:
        return -SI_SDR_CLAMP_DB
    if den == 0.0:
        return SI_SDR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(num / den), -SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))


def weighted_si_sdr_loss(
    ref: np.ndarray, est: np.ndarray, ear_weights_rl: tuple[float, float]
) -> float:
    """Negative weighted SI-SDR over (left, right) channel pairs."""
    ref = np.atleast_2d(ref)
    est = np.atleast_2d(est)
    if ref.shape[0] != 2 or est.shape[0] != 2:
        raise LossError("binaural signals must have 2 channels")
    w_r, w_l = ear_weights_rl
    return -(w_r * si_sdr(ref[1], est[1]) + w_l * si_sdr(ref[0], est[0]))


def _check_grids(ref: ComplexSpectrogram, est: ComplexSpectrogram) -> None:
    if ref.bins.shape != est.bins.shape:
        raise LossError(f"spectrogram grids {ref.bins.shape} != {est.bins.shape}")


def stft_loss(
    ref: ComplexSpectrogram, est: ComplexSpectrogram, cutoff_hz: float = 1500.0
) -> float:
    """Mean entry-wise complex L1 (|re diff| + |im diff|) below the cutoff."""
    _check_grids(ref, est)
    region = ref.config.bin_freqs() < cutoff_hz
    if not np.any(region):
        return 0.0
    d = ref.bins[region] - est.bins[region]
    return float(np.sum(np.abs(d.real) + np.abs(d.imag)) / d.size)


def mag_stft_loss(
    ref: ComplexSpectrogram, est: ComplexSpectrogram, cutoff_hz: float = 1500.0
) -> float:
    """Log-magnitude L1 mean plus spectral convergence, bins >= cutoff."""
    _check_grids(ref, est)
    region = ref.config.bin_freqs() >= cutoff_hz
    if not np.any(region):
        return 0.0
    rm = np.abs(ref.bins[region])
    em = np.abs(est.bins[region])
    log_term = float(np.mean(np.abs(np.log(rm + EPS_SPECTRUM) - np.log(em + EPS_SPECTRUM))))
    conv = float(
        np.linalg.norm(rm - em) / max(np.linalg.norm(rm), EPS_SPECTRUM)
    )
    return log_term + conv


def wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return np.pi - (np.pi - np.asarray(x)) % (2 * np.pi)


@dataclass(frozen=True)
class BinauralLossParts:
    l_ild: float
    l_ipd: float
    l_ivs: float | None
    combined: float


def auditory_binaural_loss(
    ref_cues: AuditoryCueMaps, est_cues: AuditoryCueMaps, weights: LossWeights
) -> BinauralLossParts:
    """MSE between interaural cue maps: ILD (dB^2), IPD (rad^2, wrapped), IVS."""
    for a, b in ((ref_cues.ild, est_cues.ild), (ref_cues.ipd, est_cues.ipd),
                 (ref_cues.ivs, est_cues.ivs)):
        if a.shape != b.shape:
            raise LossError(f"cue map grids {a.shape} != {b.shape}")
    l_ild = float(np.mean((ref_cues.ild - est_cues.ild) ** 2))
    l_ipd = float(np.mean(wrap_angle(ref_cues.ipd - est_cues.ipd) ** 2))
    l_ivs = float(np.mean((ref_cues.ivs - est_cues.ivs) ** 2))
    combined = weights.delta * l_ild + weights.lam * l_ipd + weights.kappa * l_ivs
    return BinauralLossParts(l_ild, l_ipd, l_ivs, combined)


def stft_ild_ipd(spec: ComplexSpectrogram) -> tuple[np.ndarray, np.ndarray]:
    """Directly defined per-cell ILD (dB) and IPD (rad) of a binaural spectrogram."""
    if spec.channels != 2:
        raise LossError("binaural spectrogram must have 2 channels")
    left, right = spec.bins[:, :, 0], spec.bins[:, :, 1]
    ild = 20.0 * np.log10((np.abs(left) + EPS_SPECTRUM) / (np.abs(right) + EPS_SPECTRUM))
    ipd = np.angle(left * np.conj(right))
    return ild, ipd


def stft_binaural_loss(
    ref: ComplexSpectrogram, est: ComplexSpectrogram, weights: LossWeights
) -> BinauralLossParts:
    """MSE of the STFT-defined ILD and IPD over all time-frequency cells."""
    _check_grids(ref, est)
    ild_r, ipd_r = stft_ild_ipd(ref)
    ild_e, ipd_e = stft_ild_ipd(est)
    l_ild = float(np.mean((ild_r - ild_e) ** 2))
    l_ipd = float(np.mean(wrap_angle(ipd_r - ipd_e) ** 2))
    combined = weights.delta_p * l_ild + weights.lambda_p * l_ipd
    return BinauralLossParts(l_ild, l_ipd, None, combined)


@dataclass(frozen=True)
class NormalizerState:
    """Exponential running averages used to scale loss components."""

    decay: float = 0.99
    floor: float = 1e-8
    ema: dict = field(default_factory=dict)

    def updated(self, values: dict) -> "NormalizerState":
        ema = dict(self.ema)
        for name, value in values.items():
            if name in ema:
                ema[name] = self.decay * ema[name] + (1.0 - self.decay) * value
            else:
                ema[name] = value  # first batch self-normalizes
        return replace(self, ema=ema)


def composite_loss(
    components: dict, weights: dict, state: NormalizerState
) -> tuple[float, dict, NormalizerState]:
    """Scale each component by its running average, then combine.

    Division uses the magnitude of the average so sign-carrying components
    (the negated SI-SDR) keep their sign and gradient direction instead of
    collapsing onto the floor. Returns (total, normalized components,
    updated state); the state is a value, so callers thread it through
    successive batches explicitly.
    """
    for name, value in components.items():
        if not np.isfinite(value):
            raise LossError(f"non-finite loss component {name}={value}")
    state = state.updated(components)
    normalized = {
        name: value / max(abs(state.ema[name]), state.floor)
        for name, value in components.items()
    }
    total = float(sum(weights.get(name, 0.0) * normalized[name] for name in components))
    return total, normalized, state
