"""Frame index selection and per-frame preprocessing.

Training draws a random consecutive window from the source clip (looping
short clips), then a random ascending subsample; evaluation uses the
deterministic variants of both so repeated passes are bit-identical.
"""

from __future__ import annotations

import numpy as np

from ..errors import InputError


def sample_window(frame_count: int, window: int = 90, rng: np.random.Generator | None = None) -> list[int]:
    """Indices of ``window`` consecutive source frames.

    Clips with at least ``window`` frames contribute a random consecutive
    run; shorter clips are looped as many times as needed, starting from a
    random offset. With ``rng=None`` (evaluation) the start is always 0.
    """
    if frame_count < 1:
        raise InputError(f"frame_count must be >= 1, got {frame_count}")
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    if frame_count >= window:
        start = 0 if rng is None else int(rng.integers(0, frame_count - window + 1))
        return list(range(start, start + window))
    start = 0 if rng is None else int(rng.integers(0, frame_count))
    return [(start + i) % frame_count for i in range(window)]


def subsample_train(window_len: int = 90, n: int = 30, rng: np.random.Generator | None = None) -> list[int]:
    """``n`` distinct indices drawn uniformly without replacement, ascending."""
    if n > window_len:
        raise InputError(f"cannot draw {n} distinct frames from a window of {window_len}")
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = rng if rng is not None else np.random.default_rng()
    picks = rng.choice(window_len, size=n, replace=False)
    picks.sort()
    return [int(i) for i in picks]


def subsample_eval(window_len: int = 90, n: int = 30) -> list[int]:
    """Deterministic uniform stride: floor(j * window_len / n)."""
    if n > window_len:
        raise InputError(f"cannot draw {n} frames from a window of {window_len}")
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    return [(j * window_len) // n for j in range(n)]


def center_crop(image: np.ndarray, size: int) -> np.ndarray:
    """Crop a [C, H, W] image to ``size`` x ``size`` around its center."""
    _, h, w = image.shape
    if h < size or w < size:
        raise InputError(f"image {h}x{w} is smaller than crop size {size}")
    top = (h - size) // 2
    left = (w - size) // 2
    return image[:, top:top + size, left:left + size]


def preprocess_frame(
    image: np.ndarray,
    crop: int,
    mean: tuple[float, ...] | float = 0.5,
    std: tuple[float, ...] | float = 0.5,
) -> np.ndarray:
    """Center crop, rescale pixel values to [0, 1], then normalize per channel."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise InputError(f"frame must be [C,H,W], got shape {image.shape}")
    cropped = center_crop(image, crop)
    mean_arr = np.reshape(np.asarray(mean, dtype=np.float64), (-1, 1, 1))
    std_arr = np.reshape(np.asarray(std, dtype=np.float64), (-1, 1, 1))
    return (cropped / 255.0 - mean_arr) / std_arr
