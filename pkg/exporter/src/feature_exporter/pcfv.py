"""PCFV writer (little-endian).

Layout: magic ``PCFV``, u32 version word (low 24 bits = 1; high-byte bit 0
marks raw pixel clips, never set by this exporter), u32 T, C, H, W, u32
label, then T*C*H*W float32 values in frame/channel/row order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"PCFV"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s6I")


def write_feature_file(frames: np.ndarray, label: int, path: str | Path) -> None:
    """Atomically write a [T, C, H, W] float array as a feature clip."""
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise ValueError(f"frames must be [T,C,H,W], got shape {frames.shape}")
    t, c, h, w = frames.shape
    path = Path(path)
    payload = frames.astype("<f4").tobytes()
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, t, c, h, w, int(label)))
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
