"""Deterministic frame selection, matching the engine's evaluation rules.

Re-implemented against the shared format contract (not imported from the
engine): a consecutive window starting at frame 0, looped for short clips,
followed by the floor(j * window / n) uniform stride when fewer frames are
wanted than the window holds.
"""

from __future__ import annotations

WINDOW = 90


def eval_window(frame_count: int, window: int = WINDOW) -> list[int]:
    """Window of ``window`` consecutive indices from frame 0; short clips loop."""
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    if frame_count >= window:
        return list(range(window))
    return [i % frame_count for i in range(window)]


def subsample_eval(window_len: int, n: int) -> list[int]:
    """Uniform deterministic stride: floor(j * window_len / n)."""
    if n > window_len or n < 1:
        raise ValueError(f"cannot draw {n} frames from a window of {window_len}")
    return [(j * window_len) // n for j in range(n)]


def select_frame_indices(frame_count: int, frames_per_clip: int = WINDOW) -> list[int]:
    """Source-frame indices for one exported clip.

    Clips export the standard 90-frame window; asking for fewer frames
    applies the evaluation stride inside that window. Asking for more
    widens the window itself.
    """
    if frames_per_clip >= WINDOW:
        return eval_window(frame_count, frames_per_clip)
    window = eval_window(frame_count, WINDOW)
    return [window[j] for j in subsample_eval(WINDOW, frames_per_clip)]
