"""Padded observation windows and their channel-stacked form.

A window holds the current frame and the ``WINDOW - 1`` frames before it,
oldest first. Steps near the start of an episode are left-padded with
all-zero frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HISTORY = 20
WINDOW = HISTORY + 1
FRAME_SHAPE = (64, 64, 3)
STACKED_CHANNELS = 3 * WINDOW


@dataclass
class ObservationSet:
    frames: np.ndarray  # (21, 64, 64, 3)
    valid_count: int

    def __post_init__(self):
        if self.frames.shape != (WINDOW, *FRAME_SHAPE):
            raise ValueError(f"expected frames of shape {(WINDOW, *FRAME_SHAPE)}, got {self.frames.shape}")
        if not 1 <= self.valid_count <= WINDOW:
            raise ValueError(f"valid_count must be in [1, {WINDOW}]")


def window_frames(frames: np.ndarray, i: int) -> np.ndarray:
    """The ``(21, H, W, 3)`` window ending at step ``i`` of a frame sequence."""
    T = len(frames)
    if not 0 <= i < T:
        raise IndexError(f"step {i} out of range for an episode of length {T}")
    lo = max(0, i - HISTORY)
    n_blank = max(0, HISTORY - i)
    out = np.zeros((WINDOW,) + frames.shape[1:], dtype=np.float32)
    out[n_blank:] = frames[lo:i + 1]
    return out


def make_observation_set(episode, i: int) -> ObservationSet:
    return ObservationSet(frames=window_frames(episode.frames, i), valid_count=min(i + 1, WINDOW))


def stack_channels(obs) -> np.ndarray:
    """``(21, H, W, 3)`` -> ``(H, W, 63)`` with channel ``3*j + k`` = frame ``j`` channel ``k``.

    Accepts an :class:`ObservationSet` or a raw array; a leading batch axis
    is kept.
    """
    frames = obs.frames if isinstance(obs, ObservationSet) else np.asarray(obs)
    if frames.shape[-4] != WINDOW or frames.shape[-1] != 3:
        raise ValueError(f"expected (..., {WINDOW}, H, W, 3), got {frames.shape}")
    moved = np.moveaxis(frames, -4, -2)  # (..., H, W, 21, 3)
    return moved.reshape(moved.shape[:-2] + (STACKED_CHANNELS,))


def unstack(stacked: np.ndarray) -> np.ndarray:
    stacked = np.asarray(stacked)
    if stacked.shape[-1] != STACKED_CHANNELS:
        raise ValueError(f"expected {STACKED_CHANNELS} channels, got {stacked.shape[-1]}")
    split = stacked.reshape(stacked.shape[:-1] + (WINDOW, 3))
    return np.moveaxis(split, -2, -4)


def episode_windows(episode) -> np.ndarray:
    """All ``T`` windows of an episode, ``(T, 21, 64, 64, 3)``."""
    return np.stack([window_frames(episode.frames, i) for i in range(len(episode.frames))])
