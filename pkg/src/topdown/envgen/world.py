"""Procedural room-with-boxes worlds.

Coordinates are (x, z) on the ground plane, with the room spanning
``[0, room_size]`` on both axes. Colors are stored as 8-bit triples so that
every rendered value survives a PNG round trip unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

# 8-bit palette; float views are obtained with ``to_float``.
OBJECT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (220, 40, 40),    # red
    (40, 180, 60),    # green
    (40, 80, 220),    # blue
    (235, 210, 40),   # yellow
    (200, 50, 200),   # magenta
    (40, 200, 210),   # cyan
    (240, 140, 30),   # orange
)
WALL_COLOR = (90, 90, 110)
FLOOR_COLOR = (200, 190, 160)
SKY_COLOR = (150, 180, 230)
UNKNOWN_COLOR = (128, 128, 128)
MARKER_COLOR = (255, 255, 255)


def to_float(color) -> np.ndarray:
    return np.asarray(color, dtype=np.float32) / np.float32(255.0)


class PlacementError(RuntimeError):
    """Objects could not be placed within the attempt budget."""


@dataclass(frozen=True)
class Box:
    center: tuple[float, float]
    half_extent: float
    height: float
    color: tuple[int, int, int]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        cx, cz = self.center
        h = self.half_extent
        return cx - h, cx + h, cz - h, cz + h

    def contains(self, x: float, z: float) -> bool:
        x0, x1, z0, z1 = self.bounds
        return x0 <= x <= x1 and z0 <= z <= z1


@dataclass(frozen=True)
class EnvironmentSpec:
    seed: int
    room_size: float
    wall_color: tuple[int, int, int]
    floor_color: tuple[int, int, int]
    objects: tuple[Box, ...]
    agent_position: tuple[float, float]
    agent_height: float
    wall_height: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects"] = [asdict(b) for b in self.objects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentSpec":
        objects = tuple(
            Box(center=tuple(b["center"]), half_extent=b["half_extent"],
                height=b["height"], color=tuple(b["color"]))
            for b in d["objects"]
        )
        return cls(
            seed=int(d["seed"]),
            room_size=float(d["room_size"]),
            wall_color=tuple(d["wall_color"]),
            floor_color=tuple(d["floor_color"]),
            objects=objects,
            agent_position=tuple(d["agent_position"]),
            agent_height=float(d["agent_height"]),
            wall_height=float(d.get("wall_height", 1.0)),
        )


@dataclass
class GenerationConfig:
    """Parameters of the procedural world and of episode simulation."""

    room_size: float = 8.0
    min_objects: int = 2
    max_objects: int = 5
    half_extent_range: tuple[float, float] = (0.35, 0.8)
    height_range: tuple[float, float] = (0.4, 1.4)
    wall_height: float = 1.0
    agent_height: float = 0.5
    agent_margin: float = 1.0
    object_gap: float = 0.2
    palette: tuple[tuple[int, int, int], ...] = OBJECT_PALETTE
    wall_color: tuple[int, int, int] = WALL_COLOR
    floor_color: tuple[int, int, int] = FLOOR_COLOR
    fov_deg: float = 60.0
    image_size: int = 64
    episode_length: int = 40
    rotation_policy: str = "fixed"
    steps_per_revolution: int = 20
    max_attempts: int = 1000

    def validate(self) -> None:
        if self.room_size <= 0:
            raise ValueError("room_size must be positive")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("object count range is empty")
        if len(set(self.palette)) < 6:
            raise ValueError("palette needs at least 6 distinct colors")
        if self.half_extent_range[0] <= 0 or self.half_extent_range[0] > self.half_extent_range[1]:
            raise ValueError("bad half_extent_range")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must be in (0, 180)")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if self.rotation_policy not in ("fixed", "random"):
            raise ValueError(f"unknown rotation_policy {self.rotation_policy!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["palette"] = [list(c) for c in self.palette]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        d = dict(d)
        for key in ("half_extent_range", "height_range", "wall_color", "floor_color"):
            if key in d:
                d[key] = tuple(d[key])
        if "palette" in d:
            d["palette"] = tuple(tuple(c) for c in d["palette"])
        return cls(**d)


def _boxes_overlap(a: tuple[float, float, float], b: tuple[float, float, float], gap: float) -> bool:
    (ax, az, ah), (bx, bz, bh) = a, b
    return abs(ax - bx) < ah + bh + gap and abs(az - bz) < ah + bh + gap


def sample_environment(seed: int, config: GenerationConfig | None = None) -> EnvironmentSpec:
    """Draw a room, its boxes and the agent position from ``seed``.

    Raises :class:`PlacementError` when the boxes cannot be placed without
    overlapping each other, the walls or the agent within
    ``config.max_attempts`` draws.
    """
    config = config or GenerationConfig()
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE1]))
    size = config.room_size
    lo_h, hi_h = config.half_extent_range
    if lo_h >= size / 2:
        raise PlacementError(f"half extent {lo_h} cannot fit in a room of size {size}")
    margin = config.agent_margin
    if 2 * margin >= size:
        raise PlacementError("agent margin leaves no room for the agent")

    agent = (float(rng.uniform(margin, size - margin)), float(rng.uniform(margin, size - margin)))
    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    colors = rng.permutation(len(config.palette))[:n_objects]

    placed: list[tuple[float, float, float]] = []
    boxes: list[Box] = []
    attempts = 0
    while len(boxes) < n_objects:
        attempts += 1
        if attempts > config.max_attempts:
            raise PlacementError(
                f"placed {len(boxes)}/{n_objects} objects after {config.max_attempts} attempts"
            )
        h = float(rng.uniform(lo_h, hi_h))
        if 2 * h >= size:
            continue
        # strictly inside: keep a sliver between box and wall
        slack = 0.05
        if h + slack >= size - h - slack:
            continue
        cx = float(rng.uniform(h + slack, size - h - slack))
        cz = float(rng.uniform(h + slack, size - h - slack))
        # agent stays clear of the box by object_gap on the dominant axis
        if abs(cx - agent[0]) < h + config.object_gap and abs(cz - agent[1]) < h + config.object_gap:
            continue
        cand = (cx, cz, h)
        if any(_boxes_overlap(cand, other, config.object_gap) for other in placed):
            continue
        height = float(rng.uniform(*config.height_range))
        placed.append(cand)
        boxes.append(Box(center=(cx, cz), half_extent=h, height=height,
                         color=tuple(int(c) for c in config.palette[colors[len(boxes)]])))

    return EnvironmentSpec(
        seed=int(seed),
        room_size=float(size),
        wall_color=tuple(config.wall_color),
        floor_color=tuple(config.floor_color),
        objects=tuple(boxes),
        agent_position=agent,
        agent_height=float(config.agent_height),
        wall_height=float(config.wall_height),
    )


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float]
    yaw: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))


def normalize_yaw(yaw: float) -> float:
    y = math.fmod(float(yaw), 2 * math.pi)
    if y < 0:
        y += 2 * math.pi
    if y >= 2 * math.pi:
        y = 0.0
    return y
