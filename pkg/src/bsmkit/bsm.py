"""BSM filter design: regularized least squares, magnitude least squares,
crossover assembly, head-rotation compensation, and STFT-domain rendering.

Per frequency bin the LS filters solve

    c = (V V^H + (sn2/ss2) I)^-1 V h*          (per ear)

over a diffuse design grid of D directions, where V is the M x D steering
matrix and h the design-direction HRTFs. Above the crossover (default
1.5 kHz) the complex match is relaxed to magnitude matching and solved by
variable exchange: fix a phase estimate psi per direction, solve the LS
system for the target |h| exp(i psi), re-estimate psi from the reproduced
response, repeat. Each half-step is an exact minimization, so the
exchange objective

    ss2 * || |V^T c*| - |h| ||^2 + sn2 * ||c||^2

is non-increasing across iterates.

Head rotation is azimuthal and rightward-positive. Both render
configurations look HRTFs up at the rotated directions (theta, phi+rot);
the input (compensated) configuration keeps the recording geometry while
the target (aligned) configuration also yaws the array by the same angle,
which restores the aligned-array design problem up to design-grid
rotation closure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .arrays import ArrayGeometry, rigid_sphere_steering
from .grids import fibonacci_sphere
from .hrtf import HrtfQuery, HrtfSet, lookup_rotated
from .stft import ComplexSpectrogram, StftConfig


class BsmError(ValueError):
    pass


@dataclass(frozen=True)
class MaglsSettings:
    """Exchange-solver settings.

    init policies: "continuation" seeds each bin with the previous bin's
    converged phase (LS phase at the first bin; right choice for smooth
    spectra), "ls" seeds every bin from its own LS phase, and "multi" runs
    a deterministic fan of phase-offset starts per bin and keeps the best
    exchange objective (escapes the local optima the plain exchange can
    stall in; intended for small design grids).
    """

    max_iter: int = 100
    tol: float = 1e-6
    init: str = "continuation"
    multi_starts: int = 8

    def __post_init__(self):
        if self.init not in ("continuation", "ls", "multi"):
            raise BsmError(f"unknown MagLS init policy {self.init!r}")


def _default_grid() -> np.ndarray:
    return fibonacci_sphere(240)


@dataclass(frozen=True)
class BsmConfig:
    design_grid_deg: np.ndarray = field(default_factory=_default_grid)
    snr_ratio: float = 1e3  # sigma_s^2 / sigma_n^2
    cutoff_hz: float = 1500.0
    magls: MaglsSettings = field(default_factory=MaglsSettings)

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.design_grid_deg, dtype=np.float64))
        if self.snr_ratio <= 0:
            raise BsmError("snr_ratio must be positive")
        object.__setattr__(self, "design_grid_deg", grid)

    @property
    def n_directions(self) -> int:
        return self.design_grid_deg.shape[0]


INPUT_COMPENSATED = "input-compensated"
TARGET_ALIGNED = "target-aligned"


@dataclass(frozen=True)
class RenderJob:
    configuration: str
    rotation_deg: float

    def __post_init__(self):
        if self.configuration not in (INPUT_COMPENSATED, TARGET_ALIGNED):
            raise BsmError(f"unknown job configuration {self.configuration!r}")


@dataclass
class BsmFilterBank:
    """Per-bin filter pairs plus solver provenance.

    coeffs: (n_bins, mics, 2) complex, ears ordered (left, right);
    is_magls: per-bin method tag; iterations / residual record the MagLS
    exchange outcome (iterations 0 and the LS residual below the cutoff).
    """

    coeffs: np.ndarray
    is_magls: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    ls_residual: np.ndarray
    cutoff_hz: float
    sample_rate: int
    converged: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.coeffs.shape[0]

    @property
    def mic_count(self) -> int:
        return self.coeffs.shape[1]


def ls_solve_bin(v_bin: np.ndarray, targets: np.ndarray, snr_ratio: float,
                 bin_index: int = -1):
    """Solve the regularized LS system for one bin.

    v_bin: (M, D); targets: (D, E) complex for E independent targets.
    Returns (c (M, E), reproduced (D, E)) where reproduced = V^T c*.
    """
    m = v_bin.shape[0]
    a = v_bin @ v_bin.conj().T + (1.0 / snr_ratio) * np.eye(m)
    try:
        cho = cho_factor(a, lower=True)
    except LinAlgError as exc:
        raise BsmError(f"Cholesky factorization failed at bin {bin_index}") from exc
    c = cho_solve(cho, v_bin @ np.conj(targets))
    reproduced = v_bin.T @ np.conj(c)
    return c, reproduced


def compute_ls_filters(
    v: np.ndarray, h: np.ndarray, snr_ratio: float
) -> tuple[np.ndarray, np.ndarray]:
    """LS filters for every bin: v (F, M, D), h (F, D, E) -> (c, mag_residual).

    c has shape (F, M, E); mag_residual (F, E) is || |V^T c*| - |h| ||_2
    per bin and target, the quantity the MagLS stage competes against.
    """
    v = np.asarray(v)
    h = np.asarray(h)
    if v.ndim != 3 or h.ndim != 3 or v.shape[0] != h.shape[0] or v.shape[2] != h.shape[1]:
        raise BsmError(f"steering {v.shape} and HRTF {h.shape} grids disagree")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(h))):
        raise BsmError("non-finite steering or HRTF input")
    n_bins, m, _ = v.shape
    e = h.shape[2]
    c = np.empty((n_bins, m, e), dtype=np.complex128)
    residual = np.empty((n_bins, e))
    for f in range(n_bins):
        cf, rep = ls_solve_bin(v[f], h[f], snr_ratio, f)
        c[f] = cf
        residual[f] = np.linalg.norm(np.abs(rep) - np.abs(h[f]), axis=0)
    return c, residual


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    return (x + np.pi) % (2 * np.pi) - np.pi


def magls_exchange_bin(
    v_bin: np.ndarray,
    h_bin: np.ndarray,
    snr_ratio: float,
    psi0: np.ndarray,
    settings: MaglsSettings,
    bin_index: int = -1,
    trace: list | None = None,
):
    """Variable-exchange MagLS for one bin and one ear.

    Returns (c, psi, iterations, mag_residual, converged). ``trace``, when
    given, collects the exchange objective after each iterate.
    """
    mag = np.abs(h_bin)
    m = v_bin.shape[0]
    a = v_bin @ v_bin.conj().T + (1.0 / snr_ratio) * np.eye(m)
    try:
        cho = cho_factor(a, lower=True)
    except LinAlgError as exc:
        raise BsmError(f"Cholesky factorization failed at bin {bin_index}") from exc
    psi = np.asarray(psi0, dtype=np.float64)
    c = None
    converged = False
    iterations = settings.max_iter
    for it in range(1, settings.max_iter + 1):
        target = mag * np.exp(1j * psi)
        c = cho_solve(cho, v_bin @ np.conj(target))
        reproduced = v_bin.T @ np.conj(c)
        if trace is not None:
            res = np.linalg.norm(np.abs(reproduced) - mag)
            trace.append(res**2 + np.linalg.norm(c) ** 2 / snr_ratio)
        psi_new = np.angle(reproduced)
        step = np.max(np.abs(_wrap_angle(psi_new - psi)))
        psi = psi_new
        if step < settings.tol:
            converged = True
            iterations = it
            break
    reproduced = v_bin.T @ np.conj(c)
    mag_residual = float(np.linalg.norm(np.abs(reproduced) - mag))
    return c, psi, iterations, mag_residual, converged


def _magls_exchange_multi(
    v_bin: np.ndarray,
    h_bin: np.ndarray,
    snr_ratio: float,
    psi0: np.ndarray,
    settings: MaglsSettings,
    bin_index: int = -1,
):
    """Variable exchange over a batch of phase starts (columns of psi0).

    All starts iterate in lockstep on one factorization; the best final
    exchange objective wins. Returns the same tuple as
    :func:`magls_exchange_bin`.
    """
    mag = np.abs(h_bin)[:, None]
    m = v_bin.shape[0]
    a = v_bin @ v_bin.conj().T + (1.0 / snr_ratio) * np.eye(m)
    try:
        cho = cho_factor(a, lower=True)
    except LinAlgError as exc:
        raise BsmError(f"Cholesky factorization failed at bin {bin_index}") from exc
    psi = np.array(psi0, dtype=np.float64)
    c = None
    iterations = settings.max_iter
    converged = False
    for it in range(1, settings.max_iter + 1):
        target = mag * np.exp(1j * psi)
        c = cho_solve(cho, v_bin @ np.conj(target))
        reproduced = v_bin.T @ np.conj(c)
        psi_new = np.angle(reproduced)
        step = np.max(np.abs(_wrap_angle(psi_new - psi)))
        psi = psi_new
        if step < settings.tol:
            converged = True
            iterations = it
            break
    reproduced = v_bin.T @ np.conj(c)
    residuals = np.linalg.norm(np.abs(reproduced) - mag, axis=0)
    objectives = residuals**2 + np.linalg.norm(c, axis=0) ** 2 / snr_ratio
    best = int(np.argmin(objectives))
    return c[:, best], psi[:, best], iterations, float(residuals[best]), converged


def compute_magls_filters(
    v: np.ndarray,
    h: np.ndarray,
    snr_ratio: float,
    settings: MaglsSettings = MaglsSettings(),
    ls_coeffs: np.ndarray | None = None,
):
    """MagLS filters for every bin of v/h (ascending-frequency continuation).

    v: (F, M, D), h: (F, D, E). The first bin is initialized from the LS
    phase (computed here unless ``ls_coeffs`` is supplied); later bins
    start from the previous bin's converged phase when the policy is
    "continuation", or from their own LS phase under "ls".

    Returns (c, iterations, residual, converged) with shapes
    (F, M, E), (F, E), (F, E), (F, E).
    """
    v = np.asarray(v)
    h = np.asarray(h)
    if v.ndim != 3 or h.ndim != 3 or v.shape[0] != h.shape[0] or v.shape[2] != h.shape[1]:
        raise BsmError(f"steering {v.shape} and HRTF {h.shape} grids disagree")
    n_bins, m, _ = v.shape
    e = h.shape[2]
    if ls_coeffs is None and (settings.init == "ls" or n_bins > 0):
        ls_coeffs, _ = compute_ls_filters(v, h, snr_ratio)
    c = np.empty((n_bins, m, e), dtype=np.complex128)
    iterations = np.zeros((n_bins, e), dtype=np.int32)
    residual = np.zeros((n_bins, e))
    converged = np.zeros((n_bins, e), dtype=bool)
    d = v.shape[2]
    offset_pattern = np.arange(d) % 2  # shifts alternate phases in "multi"
    for ear in range(e):
        psi_prev = None
        for f in range(n_bins):
            psi_ls = np.angle(v[f].T @ np.conj(ls_coeffs[f, :, ear]))
            if settings.init == "multi":
                offsets = 2 * np.pi * np.arange(settings.multi_starts) / settings.multi_starts
                psi0 = psi_ls[:, None] + offset_pattern[:, None] * offsets[None, :]
                cf, psi, its, res, conv = _magls_exchange_multi(
                    v[f], h[f, :, ear], snr_ratio, psi0, settings, f
                )
            else:
                if settings.init == "ls" or psi_prev is None:
                    psi0 = psi_ls
                else:
                    psi0 = psi_prev
                cf, psi, its, res, conv = magls_exchange_bin(
                    v[f], h[f, :, ear], snr_ratio, psi0, settings, f
                )
            c[f, :, ear] = cf
            iterations[f, ear] = its
            residual[f, ear] = res
            converged[f, ear] = conv
            psi_prev = psi
    return c, iterations, residual, converged


def assemble_filterbank(
    ls_coeffs: np.ndarray,
    ls_residual: np.ndarray,
    magls_coeffs: np.ndarray,
    magls_iterations: np.ndarray,
    magls_residual: np.ndarray,
    magls_converged: np.ndarray,
    cfg: BsmConfig,
    stft_cfg: StftConfig,
) -> BsmFilterBank:
    """Crossover assembly: bins below cutoff take LS, the rest MagLS."""
    if ls_coeffs.shape != magls_coeffs.shape:
        raise BsmError(
            f"LS grid {ls_coeffs.shape} and MagLS grid {magls_coeffs.shape} disagree"
        )
    if not (0.0 <= cfg.cutoff_hz <= stft_cfg.sample_rate / 2):
        raise BsmError(f"cutoff {cfg.cutoff_hz} outside (0, Nyquist)")
    freqs = stft_cfg.bin_freqs()[: ls_coeffs.shape[0]]
    is_magls = freqs >= cfg.cutoff_hz
    coeffs = np.where(is_magls[:, None, None], magls_coeffs, ls_coeffs)
    iterations = np.where(is_magls[:, None], magls_iterations, 0)
    residual = np.where(is_magls[:, None], magls_residual, ls_residual)
    converged = np.where(is_magls[:, None], magls_converged, True)
    return BsmFilterBank(
        coeffs=coeffs,
        is_magls=is_magls,
        iterations=iterations.astype(np.int32),
        residual=residual,
        ls_residual=ls_residual,
        cutoff_hz=cfg.cutoff_hz,
        sample_rate=stft_cfg.sample_rate,
        converged=converged,
    )


_STEERING_CACHE: dict = {}


def _steering_cached(geom: ArrayGeometry, grid_deg: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Steering tensors keyed by geometry and grid; the input configuration
    reuses one canonical-yaw tensor across scenes."""
    key = (
        geom.radius, round(geom.yaw_deg, 9), geom.mic_directions_deg.tobytes(),
        grid_deg.tobytes(), freqs.size, float(freqs[-1]),
    )
    if key not in _STEERING_CACHE:
        if len(_STEERING_CACHE) > 8:
            _STEERING_CACHE.clear()
        _STEERING_CACHE[key] = rigid_sphere_steering(geom, grid_deg, freqs)
    return _STEERING_CACHE[key]


def design_targets(
    hrtf: HrtfSet, design_grid_deg: np.ndarray, rotation_deg: float, cfg: StftConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Rotated-lookup HRTF targets on the bin grid.

    Returns (h (F, D, 2), lookup_err (D,) degrees).
    """
    d = design_grid_deg.shape[0]
    irs = np.empty((d, 2, hrtf.ir_len))
    errs = np.empty(d)
    for i in range(d):
        pair, _, err = lookup_rotated(
            hrtf, HrtfQuery((design_grid_deg[i, 0], design_grid_deg[i, 1]), rotation_deg)
        )
        irs[i] = pair
        errs[i] = err
    spec = np.fft.rfft(irs, n=cfg.fft_len, axis=2)  # (D, 2, F)
    return np.transpose(spec, (2, 0, 1)), errs


def build_job_filters(
    job: RenderJob,
    cfg: BsmConfig,
    geom: ArrayGeometry,
    hrtf: HrtfSet,
    stft_cfg: StftConfig,
) -> BsmFilterBank:
    """Design the filter bank for one render configuration.

    Input (compensated): steering from the recording geometry as-is,
    HRTFs looked up with the head rotation. Target (aligned): steering
    from the geometry yawed by the same rotation, HRTFs identical to the
    compensated case.
    """
    job_geom = geom if job.configuration == INPUT_COMPENSATED else geom.rotated(
        job.rotation_deg
    )
    freqs = stft_cfg.bin_freqs()
    v = _steering_cached(job_geom, cfg.design_grid_deg, freqs)
    h, _ = design_targets(hrtf, cfg.design_grid_deg, job.rotation_deg, stft_cfg)
    ls_coeffs, ls_residual = compute_ls_filters(v, h, cfg.snr_ratio)
    magls_lo = int(np.searchsorted(freqs, cfg.cutoff_hz))
    coeffs = ls_coeffs.copy()
    iterations = np.zeros((freqs.size, 2), dtype=np.int32)
    residual = ls_residual.copy()
    converged = np.ones((freqs.size, 2), dtype=bool)
    if magls_lo < freqs.size:
        mc, mi, mr, mconv = compute_magls_filters(
            v[magls_lo:], h[magls_lo:], cfg.snr_ratio, cfg.magls,
            ls_coeffs=ls_coeffs[magls_lo:],
        )
        coeffs[magls_lo:] = mc
        iterations[magls_lo:] = mi
        residual[magls_lo:] = mr
        converged[magls_lo:] = mconv
    return BsmFilterBank(
        coeffs=coeffs,
        is_magls=freqs >= cfg.cutoff_hz,
        iterations=iterations,
        residual=residual,
        ls_residual=ls_residual,
        cutoff_hz=cfg.cutoff_hz,
        sample_rate=stft_cfg.sample_rate,
        converged=converged,
    )


def render_binaural(bank: BsmFilterBank, mic_spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Apply the bank per bin and frame: out_ear = c_ear^H x (2 channels)."""
    if mic_spec.bins.shape[0] != bank.n_bins:
        raise BsmError(
            f"spectrogram bins {mic_spec.bins.shape[0]} != bank bins {bank.n_bins}"
        )
    if mic_spec.channels != bank.mic_count:
        raise BsmError(
            f"spectrogram channels {mic_spec.channels} != bank mics {bank.mic_count}"
        )
    out = np.einsum("fme,ftm->fte", np.conj(bank.coeffs), mic_spec.bins)
    return ComplexSpectrogram(out, mic_spec.config, mic_spec.signal_len)


def save_filterbank(path, bank: BsmFilterBank) -> None:
    """JSON header line + float32/uint8 blobs, schema version 1."""
    header = {
        "format": "bsm-filterbank",
        "version": 1,
        "n_bins": bank.n_bins,
        "mics": bank.mic_count,
        "cutoff_hz": bank.cutoff_hz,
        "sample_rate": bank.sample_rate,
        "layout": "coeffs[re,im] f32 (bins,mics,2); is_magls u8; iterations i32; "
                  "residual f32; ls_residual f32; converged u8",
    }
    with open(path, "wb") as f:
        f.write((json.dumps(header, sort_keys=True) + "\n").encode())
        inter = np.stack([bank.coeffs.real, bank.coeffs.imag], axis=-1).astype("<f4")
        f.write(inter.tobytes())
        f.write(bank.is_magls.astype("u1").tobytes())
        f.write(bank.iterations.astype("<i4").tobytes())
        f.write(bank.residual.astype("<f4").tobytes())
        f.write(bank.ls_residual.astype("<f4").tobytes())
        f.write(bank.converged.astype("u1").tobytes())


def load_filterbank(path) -> BsmFilterBank:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != "bsm-filterbank" or header.get("version") != 1:
            raise BsmError(f"{path}: not a version-1 filter bank file")
        n_bins, mics = header["n_bins"], header["mics"]
        blob = f.read()
    off = 0

    def take(dtype, shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
        off += arr.nbytes
        return arr

    inter = take("<f4", (n_bins, mics, 2, 2)).astype(np.float64)
    coeffs = inter[..., 0] + 1j * inter[..., 1]
    is_magls = take("u1", (n_bins,)).astype(bool)
    iterations = take("<i4", (n_bins, 2)).astype(np.int32)
    residual = take("<f4", (n_bins, 2)).astype(np.float64)
    ls_residual = take("<f4", (n_bins, 2)).astype(np.float64)
    converged = take("u1", (n_bins, 2)).astype(bool)
    return BsmFilterBank(
        coeffs, is_magls, iterations, residual, ls_residual,
        header["cutoff_hz"], header["sample_rate"], converged,
    )
