from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .render import (
    IMAGE_SIZE, agent_cell, frustum_wedge, line_of_sight,
    render_first_person_u8, render_topdown_u8,
)
from .world import EnvironmentSpec, GenerationConfig, Pose, normalize_yaw


@dataclass
class Episode:
    """A rotation episode.

    ``frames`` and ``targets`` are ``(T, 64, 64, 3)`` float32 arrays in [0, 1],
    ``visibility`` is ``(T, 64, 64)`` bool, cumulative over steps.
    """

    env: EnvironmentSpec
    frames: np.ndarray
    poses: list[Pose]
    visibility: np.ndarray
    targets: np.ndarray
    seed: int = 0
    fov_deg: float = 60.0

    def __len__(self) -> int:
        return len(self.poses)


def rotation_yaws(T: int, policy: str, seed: int, steps_per_revolution: int = 20) -> np.ndarray:
    """Yaw sequence for a rotation episode; the start yaw is drawn from ``seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA7]))
    yaw0 = rng.uniform(0.0, 2 * math.pi)
    step = 2 * math.pi / steps_per_revolution
    if policy == "fixed":
        incs = np.full(T - 1, step)
    elif policy == "random":
        incs = rng.uniform(-2 * step, 2 * step, size=T - 1)
    else:
        raise ValueError(f"unknown rotation policy {policy!r}")
    yaws = yaw0 + np.concatenate([[0.0], np.cumsum(incs)])
    return np.array([normalize_yaw(y) for y in yaws])


def simulate_episode(env: EnvironmentSpec, T: int | None = None, rotation_policy: str | None = None,
                     seed: int | None = None, config: GenerationConfig | None = None) -> Episode:
    """Rotate the agent in place for ``T`` steps and render every step.

    ``seed`` drives the start yaw (and the increments of the random policy);
    it defaults to the environment seed.
    """
    config = config or GenerationConfig()
    T = config.episode_length if T is None else T
    if T <= 0:
        raise ValueError(f"episode length must be positive, got {T}")
    policy = rotation_policy or config.rotation_policy
    seed = env.seed if seed is None else seed
    fov = config.fov_deg

    yaws = rotation_yaws(T, policy, seed, config.steps_per_revolution)
    poses = [Pose(position=env.agent_position, yaw=float(y)) for y in yaws]
    los = line_of_sight(env, IMAGE_SIZE)
    r, c = agent_cell(env, IMAGE_SIZE)

    frames = np.empty((T, IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    targets = np.empty_like(frames)
    visibility = np.zeros((T, IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    seen = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=bool)
    seen[r, c] = True
    for i, pose in enumerate(poses):
        frames[i] = render_first_person_u8(env, pose, fov, IMAGE_SIZE)
        seen = seen | (frustum_wedge(env, pose.yaw, fov, IMAGE_SIZE) & los)
        visibility[i] = seen
        targets[i] = render_topdown_u8(env, seen)

    scale = np.float32(255.0)
    return Episode(env=env, frames=frames.astype(np.float32) / scale, poses=poses,
                   visibility=visibility, targets=targets.astype(np.float32) / scale,
                   seed=int(seed), fov_deg=fov)
