"""Input checks shared by the estimator API."""
from __future__ import annotations

import numpy as np

from .obsmodel import FRAME_SHAPE, WINDOW


def _as_float_images(X, name: str) -> np.ndarray:
    X = np.asarray(X)
    if X.dtype == np.uint8:
        X = X.astype(np.float32) / np.float32(255.0)
    elif not np.issubdtype(X.dtype, np.floating):
        raise TypeError(f"{name} must be float in [0, 1] or uint8, got {X.dtype}")
    X = X.astype(np.float32, copy=False)
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return X


def check_windows(X) -> np.ndarray:
    """Validate a batch of observation windows, ``(n, 21, 64, 64, 3)``."""
    X = np.asarray(X)
    if X.ndim == 4:
        X = X[None]
    if X.ndim != 5 or X.shape[1:] != (WINDOW, *FRAME_SHAPE):
        raise ValueError(f"expected windows of shape (n, {WINDOW}, 64, 64, 3), got {X.shape}")
    return _as_float_images(X, "X")


def check_targets(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 4 or y.shape[-1] != 3 or y.shape[1] != y.shape[2]:
        raise ValueError(f"expected targets of shape (n, s, s, 3), got {y.shape}")
    if n is not None and len(y) != n:
        raise ValueError(f"X has {n} samples but y has {len(y)}")
    return _as_float_images(y, "y")


def check_frames(frames) -> np.ndarray:
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[1:] != FRAME_SHAPE:
        raise ValueError(f"expected a frame sequence of shape (T, 64, 64, 3), got {frames.shape}")
    if len(frames) == 0:
        raise ValueError("frame sequence is empty")
    return _as_float_images(frames, "frames")
