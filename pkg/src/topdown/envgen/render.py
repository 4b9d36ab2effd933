"""Column raycaster for first-person frames and an orthographic map renderer."""
from __future__ import annotations

import math

import numpy as np

from .world import (
    EnvironmentSpec, Pose, SKY_COLOR, UNKNOWN_COLOR, MARKER_COLOR,
)

IMAGE_SIZE = 64
SIDE_SHADE = 0.75


class InvalidPoseError(ValueError):
    pass


def _u8_to_float(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float32) / np.float32(255.0)


def camera_rays(yaw: float, fov_deg: float, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized per-column ray directions whose forward component is 1.

    Distances along these rays are therefore perpendicular (fisheye-free)
    distances to the camera plane.
    """
    fwd = np.array([math.cos(yaw), math.sin(yaw)])
    plane = np.array([-math.sin(yaw), math.cos(yaw)]) * math.tan(math.radians(fov_deg) / 2)
    cam_x = 2.0 * (np.arange(width) + 0.5) / width - 1.0
    rays = fwd[None, :] + cam_x[:, None] * plane[None, :]
    return rays[:, 0], rays[:, 1]


def _wall_hits(px, pz, rx, rz, size):
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(rx > 0, (size - px) / rx, np.where(rx < 0, -px / rx, np.inf))
        tz = np.where(rz > 0, (size - pz) / rz, np.where(rz < 0, -pz / rz, np.inf))
    return np.minimum(tx, tz), tz < tx


def ray_box_distance(px, pz, rx, rz, bounds):
    """Slab test. Returns (entry distance or inf, hit-on-z-face flag)."""
    x0, x1, z0, z1 = bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        ax0 = (x0 - px) / rx
        ax1 = (x1 - px) / rx
        az0 = (z0 - pz) / rz
        az1 = (z1 - pz) / rz
    # zero components: the slab is either always or never crossed
    inside_x = (x0 <= px) & (px <= x1)
    inside_z = (z0 <= pz) & (pz <= z1)
    tx_near = np.where(rx == 0, np.where(inside_x, -np.inf, np.inf), np.minimum(ax0, ax1))
    tx_far = np.where(rx == 0, np.where(inside_x, np.inf, -np.inf), np.maximum(ax0, ax1))
    tz_near = np.where(rz == 0, np.where(inside_z, -np.inf, np.inf), np.minimum(az0, az1))
    tz_far = np.where(rz == 0, np.where(inside_z, np.inf, -np.inf), np.maximum(az0, az1))
    t_near = np.maximum(tx_near, tz_near)
    t_far = np.minimum(tx_far, tz_far)
    hit = (t_near <= t_far) & (t_far > 0)
    return np.where(hit, t_near, np.inf), tz_near > tx_near


def check_pose(env: EnvironmentSpec, pose: Pose) -> None:
    x, z = pose.position
    if not (0 < x < env.room_size and 0 < z < env.room_size):
        raise InvalidPoseError(f"pose {pose.position} outside the room")
    for box in env.objects:
        if box.contains(x, z):
            raise InvalidPoseError(f"pose {pose.position} inside an object")


def render_first_person_u8(env: EnvironmentSpec, pose: Pose, fov_deg: float = 60.0,
                           size: int = IMAGE_SIZE) -> np.ndarray:
    check_pose(env, pose)
    px, pz = pose.position
    rx, rz = camera_rays(pose.yaw, fov_deg, size)
    focal = (size / 2) / math.tan(math.radians(fov_deg) / 2)
    horizon = size / 2
    rows = np.arange(size) + 0.5
    cam_h = env.agent_height

    img = np.empty((size, size, 3), dtype=np.uint8)
    img[rows < horizon] = SKY_COLOR
    img[rows >= horizon] = env.floor_color

    def paint(dist, height, colors, shaded):
        # dist, colors, shaded are per column
        finite = np.isfinite(dist)
        d = np.where(finite, dist, 1.0)
        top = horizon - (height - cam_h) * focal / d
        bottom = horizon + cam_h * focal / d
        band = (rows[:, None] >= top[None, :]) & (rows[:, None] < bottom[None, :]) & finite[None, :]
        col = np.where(shaded[:, None], np.round(colors * SIDE_SHADE), colors).astype(np.uint8)
        r, c = np.nonzero(band)
        img[r, c] = col[c]

    wall_d, wall_zface = _wall_hits(px, pz, rx, rz, env.room_size)
    wall_rgb = np.broadcast_to(np.asarray(env.wall_color, dtype=np.float64), (size, 3))
    paint(wall_d, np.full(size, env.wall_height), wall_rgb, wall_zface)

    if env.objects:
        dists, zfaces = zip(*(ray_box_distance(px, pz, rx, rz, b.bounds) for b in env.objects))
        dists = np.stack(dists)
        zfaces = np.stack(zfaces)
        heights = np.array([b.height for b in env.objects])
        colors = np.array([b.color for b in env.objects], dtype=np.float64)
        order = np.argsort(-dists, axis=0, kind="stable")  # far to near per column
        cols = np.arange(size)
        for rank in range(len(env.objects)):
            k = order[rank]
            paint(dists[k, cols], heights[k], colors[k], zfaces[k, cols])
    return img


def render_first_person(env: EnvironmentSpec, pose: Pose, fov_deg: float = 60.0,
                        size: int = IMAGE_SIZE) -> np.ndarray:
    """Render a ``size x size x 3`` float image in [0, 1] seen from ``pose``."""
    return _u8_to_float(render_first_person_u8(env, pose, fov_deg, size))


def cell_centers(room_size: float, size: int = IMAGE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """World (x, z) of every map cell center; rows follow z, columns follow x."""
    c = (np.arange(size) + 0.5) * (room_size / size)
    zz, xx = np.meshgrid(c, c, indexing="ij")
    return xx, zz


def agent_cell(env: EnvironmentSpec, size: int = IMAGE_SIZE) -> tuple[int, int]:
    x, z = env.agent_position
    col = min(size - 1, int(x / env.room_size * size))
    row = min(size - 1, int(z / env.room_size * size))
    return row, col


def line_of_sight(env: EnvironmentSpec, size: int = IMAGE_SIZE) -> np.ndarray:
    """Cells whose center is visible from the agent position, ignoring FOV.

    A cell is occluded when the segment from the agent to its center crosses
    a box that does not itself contain the center.
    """
    xx, zz = cell_centers(env.room_size, size)
    px, pz = env.agent_position
    rx, rz = xx - px, zz - pz
    visible = np.ones((size, size), dtype=bool)
    for box in env.objects:
        t, _ = ray_box_distance(px, pz, rx, rz, box.bounds)
        x0, x1, z0, z1 = box.bounds
        own = (xx >= x0) & (xx <= x1) & (zz >= z0) & (zz <= z1)
        visible &= ~((t <= 1.0) & ~own)
    return visible


def frustum_wedge(env: EnvironmentSpec, yaw: float, fov_deg: float = 60.0,
                  size: int = IMAGE_SIZE) -> np.ndarray:
    """Ground projection of the view frustum: cells within half the FOV of ``yaw``."""
    xx, zz = cell_centers(env.room_size, size)
    px, pz = env.agent_position
    ang = np.arctan2(zz - pz, xx - px)
    diff = np.abs((ang - yaw + np.pi) % (2 * np.pi) - np.pi)
    return diff <= math.radians(fov_deg) / 2 + 1e-12


def render_topdown_u8(env: EnvironmentSpec, visibility: np.ndarray) -> np.ndarray:
    visibility = np.asarray(visibility)
    if visibility.ndim != 2 or visibility.shape[0] != visibility.shape[1]:
        raise ValueError(f"visibility must be a square grid, got shape {visibility.shape}")
    if visibility.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"visibility must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {visibility.shape}")
    size = visibility.shape[0]
    xx, zz = cell_centers(env.room_size, size)
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:] = env.floor_color
    for box in env.objects:
        x0, x1, z0, z1 = box.bounds
        img[(xx >= x0) & (xx <= x1) & (zz >= z0) & (zz <= z1)] = box.color
    img[0, :] = img[-1, :] = env.wall_color
    img[:, 0] = img[:, -1] = env.wall_color
    r, c = agent_cell(env, size)
    for dr, dc in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
        if 0 <= r + dr < size and 0 <= c + dc < size:
            img[r + dr, c + dc] = MARKER_COLOR
    img[~visibility.astype(bool)] = UNKNOWN_COLOR
    return img


def render_topdown(env: EnvironmentSpec, visibility: np.ndarray) -> np.ndarray:
    """Orthographic map of ``env``; cells where ``visibility`` is false are unknown."""
    return _u8_to_float(render_topdown_u8(env, visibility))
