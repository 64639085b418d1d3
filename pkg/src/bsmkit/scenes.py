"""Deterministic scene sampling.

Each scene is a pure function of (master_seed, index) through a
counter-based Philox substream keyed by that pair, so scenes can be
generated independently and in parallel with identical results.

Geometry conventions: the azimuthal plane is horizontal, source and
array share a fixed height. The relative DOA places the source to the
right of the array front and is realized by yawing the array: with
rightward-positive yaw, frame azimuth = world azimuth + yaw, so
yaw = -(doa + world azimuth of the source).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .room import RoomSpec


class SceneError(ValueError):
    pass


MAX_REJECTIONS = 10_000
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SceneRanges:
    lx: tuple[float, float] = (6.0, 10.0)
    ly: tuple[float, float] = (6.0, 10.0)
    lz: tuple[float, float] = (3.0, 4.0)
    t60: tuple[float, float] = (0.3, 0.8)
    source_dist: tuple[float, float] = (1.5, 4.0)
    doa_deg: tuple[float, float] = (0.0, 60.0)
    rotation_deg: tuple[float, float] = (21.0, 60.0)
    array_wall_margin: float = 1.0
    source_wall_margin: float = 0.5
    height: float = 1.7


@dataclass(frozen=True)
class SceneSpec:
    scene_id: str
    room: RoomSpec
    source_pos: tuple[float, float, float]
    array_pos: tuple[float, float, float]
    doa_deg: float
    rotation_deg: float
    array_yaw_deg: float
    speech_ref: str | None = None
    split: str | None = None

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "scene_id": self.scene_id,
            "room": {"dims": list(self.room.dims), "t60": self.room.t60,
                     "speed_of_sound": self.room.speed_of_sound},
            "source_pos": list(self.source_pos),
            "array_pos": list(self.array_pos),
            "doa_deg": self.doa_deg,
            "rotation_deg": self.rotation_deg,
            "array_yaw_deg": self.array_yaw_deg,
            "speech_ref": self.speech_ref,
            "split": self.split,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        if data.get("schema") != SCHEMA_VERSION:
            raise SceneError(f"unsupported scene schema {data.get('schema')!r}")
        room = RoomSpec(tuple(data["room"]["dims"]), data["room"]["t60"],
                        data["room"].get("speed_of_sound", 343.0))
        return cls(
            scene_id=data["scene_id"],
            room=room,
            source_pos=tuple(data["source_pos"]),
            array_pos=tuple(data["array_pos"]),
            doa_deg=data["doa_deg"],
            rotation_deg=data["rotation_deg"],
            array_yaw_deg=data["array_yaw_deg"],
            speech_ref=data.get("speech_ref"),
            split=data.get("split"),
        )

    def with_assignment(self, speech_ref: str, split: str) -> "SceneSpec":
        return replace(self, speech_ref=speech_ref, split=split)


def scene_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based substream: Philox keyed by (master_seed, index)."""
    key = np.array([master_seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def check_constraints(spec: SceneSpec, ranges: SceneRanges) -> bool:
    room = spec.room
    src = np.asarray(spec.source_pos)
    arr = np.asarray(spec.array_pos)
    d = float(np.linalg.norm(src - arr))
    return (
        room.contains(arr, ranges.array_wall_margin)
        and room.contains(src, ranges.source_wall_margin)
        and ranges.source_dist[0] - 1e-9 <= d <= ranges.source_dist[1] + 1e-9
        and ranges.doa_deg[0] <= spec.doa_deg <= ranges.doa_deg[1]
        and ranges.rotation_deg[0] <= spec.rotation_deg <= ranges.rotation_deg[1]
        and abs(src[2] - arr[2]) < 1e-9
    )


def sample_scene(
    master_seed: int, index: int, ranges: SceneRanges = SceneRanges()
) -> SceneSpec:
    """Rejection-sample one scene; deterministic in (master_seed, index)."""
    rng = scene_rng(master_seed, index)
    for _ in range(MAX_REJECTIONS):
        dims = (
            float(rng.uniform(*ranges.lx)),
            float(rng.uniform(*ranges.ly)),
            float(rng.uniform(*ranges.lz)),
        )
        t60 = float(rng.uniform(*ranges.t60))
        m = ranges.array_wall_margin
        if dims[0] <= 2 * m or dims[1] <= 2 * m or not (m <= ranges.height <= dims[2] - m):
            continue
        arr = np.array([
            rng.uniform(m, dims[0] - m),
            rng.uniform(m, dims[1] - m),
            ranges.height,
        ])
        dist = rng.uniform(*ranges.source_dist)
        azim = rng.uniform(-np.pi, np.pi)
        src = arr + dist * np.array([np.cos(azim), np.sin(azim), 0.0])
        doa = float(rng.uniform(*ranges.doa_deg))
        rot = float(rng.uniform(*ranges.rotation_deg))
        src_azim_deg = np.rad2deg(np.arctan2(src[1] - arr[1], src[0] - arr[0]))
        spec = SceneSpec(
            scene_id=f"s{master_seed:08x}-{index:06d}",
            room=RoomSpec(dims, t60),
            source_pos=tuple(float(v) for v in src),
            array_pos=tuple(float(v) for v in arr),
            doa_deg=doa,
            rotation_deg=rot,
            array_yaw_deg=float(-(doa + src_azim_deg)),
        )
        if check_constraints(spec, ranges):
            return spec
    raise SceneError(
        f"no feasible scene for seed={master_seed} index={index} "
        f"after {MAX_REJECTIONS} rejections"
    )
