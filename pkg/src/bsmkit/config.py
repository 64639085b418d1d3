"""Layered run configuration: package defaults, overridden by a JSON config
file, overridden by command-line flags. Unknown keys are rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .arrays import ArrayGeometry, default_mic_directions
from .auditory import AuditoryConfig
from .bsm import BsmConfig, MaglsSettings
from .dataset import PipelineConfig
from .grids import fibonacci_sphere
from .losses import LossWeights
from .scenes import SceneRanges
from .stft import StftConfig


class ConfigError(ValueError):
    pass


def _build(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in config section {path!r}")
    kwargs = {}
    for name, value in data.items():
        if dataclasses.is_dataclass(fields[name].type) and isinstance(value, dict):
            kwargs[name] = _build(fields[name].type, value, f"{path}.{name}")
        else:
            kwargs[name] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {path!r}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    auditory: AuditoryConfig = field(default_factory=AuditoryConfig)
    ranges: SceneRanges = field(default_factory=SceneRanges)
    snr_ratio: float = 1e3
    cutoff_hz: float = 1500.0
    design_grid_n: int = 240
    magls_max_iter: int = 100
    magls_tol: float = 1e-6
    magls_init: str = "continuation"
    mic_count: int = 6
    array_radius: float = 0.10
    head_radius: float = 0.0875
    loss_weights: LossWeights = field(default_factory=LossWeights.evaluation)

    def bsm(self) -> BsmConfig:
        return BsmConfig(
            design_grid_deg=fibonacci_sphere(self.design_grid_n),
            snr_ratio=self.snr_ratio,
            cutoff_hz=self.cutoff_hz,
            magls=MaglsSettings(self.magls_max_iter, self.magls_tol, self.magls_init),
        )

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(default_mic_directions(self.mic_count), self.array_radius)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            stft=self.stft, bsm=self.bsm(), ranges=self.ranges, geometry=self.geometry()
        )


_SECTIONS = {
    "stft": StftConfig,
    "auditory": AuditoryConfig,
    "ranges": SceneRanges,
    "loss_weights": LossWeights,
}
_SCALARS = (
    "snr_ratio", "cutoff_hz", "design_grid_n", "magls_max_iter", "magls_tol",
    "magls_init", "mic_count", "array_radius", "head_radius",
)


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    for name in _SCALARS:
        if name in data:
            kwargs[name] = data[name]
    return RunConfig(**kwargs)
