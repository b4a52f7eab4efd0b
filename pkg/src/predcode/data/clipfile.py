"""PCFV feature-clip container and dataset manifests.

PCFV layout (little-endian): magic ``PCFV``, u32 version word, u32 T, C,
H, W, u32 label, then T*C*H*W float32 values in frame, channel, row order.
The version word's low 24 bits carry the format version (currently 1);
bit 0 of the high byte flags raw pixel clips (C=1 grayscale) as opposed to
encoder feature maps.

Manifests are JSON: {version, classes, split, entries: [{path, label,
frames}]} with entry paths relative to the manifest file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, InputError

MAGIC = b"PCFV"
FORMAT_VERSION = 1
PIXELS_FLAG = 1 << 24
MANIFEST_VERSION = 1

_HEADER = struct.Struct("<4s6I")  # magic, version word, T, C, H, W, label


@dataclass
class FeatureClip:
    """A labeled frame sequence: pixel frames or per-frame feature maps."""

    frames: np.ndarray  # [T, C, H, W] float64 in memory
    label: int
    source_id: str = ""
    pixels: bool = False

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4:
            raise InputError(f"clip frames must be [T,C,H,W], got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise InputError("clip must contain at least one frame")
        if self.label < 0:
            raise InputError(f"label must be nonnegative, got {self.label}")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


def write_feature_clip(clip: FeatureClip, path: str | Path) -> None:
    """Serialize as float32; values must be float32-representable for exact round trips."""
    path = Path(path)
    t, c, h, w = clip.frames.shape
    version_word = FORMAT_VERSION | (PIXELS_FLAG if clip.pixels else 0)
    payload = np.asarray(clip.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, version_word, t, c, h, w, clip.label))
        fh.write(payload)


def read_feature_clip(path: str | Path) -> FeatureClip:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header, file has {len(raw)} bytes", offset=len(raw))
    magic, version_word, t, c, h, w, label = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version = version_word & 0x00FFFFFF
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}", offset=4)
    pixels = bool(version_word & PIXELS_FLAG)
    if min(t, c, h, w) < 1:
        raise FormatError(f"{path}: header dims T={t} C={c} H={h} W={w} must all be >= 1", offset=8)
    expected = _HEADER.size + t * c * h * w * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload length {len(raw) - _HEADER.size} bytes does not match "
            f"header dims {t}x{c}x{h}x{w} (expected file size {expected})",
            offset=min(len(raw), expected),
        )
    frames = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(t, c, h, w)
    return FeatureClip(
        frames=frames.astype(np.float64),
        label=int(label),
        source_id=path.stem,
        pixels=pixels,
    )


@dataclass
class ManifestEntry:
    path: str  # relative to the manifest file
    label: int
    frames: int


@dataclass
class DatasetManifest:
    classes: list[str]
    split: str
    entries: list[ManifestEntry] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    base_dir: Path = field(default_factory=Path)  # set on load; not serialized

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = len(self.classes)
        seen: set[str] = set()
        for e in self.entries:
            if not 0 <= e.label < n:
                raise InputError(f"manifest entry {e.path!r}: label {e.label} out of range for {n} classes")
            if e.path in seen:
                raise InputError(f"manifest lists {e.path!r} twice")
            seen.add(e.path)

    def entry_path(self, index: int) -> Path:
        return self.base_dir / self.entries[index].path

    def __len__(self) -> int:
        return len(self.entries)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    doc = {
        "version": manifest.version,
        "classes": manifest.classes,
        "split": manifest.split,
        "entries": [
            {"path": e.path, "label": e.label, "frames": e.frames} for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid manifest JSON: {exc}") from exc
    for key in ("version", "classes", "split", "entries"):
        if key not in doc:
            raise FormatError(f"{path}: manifest missing field {key!r}")
    entries = [ManifestEntry(e["path"], int(e["label"]), int(e["frames"])) for e in doc["entries"]]
    return DatasetManifest(
        classes=list(doc["classes"]),
        split=str(doc["split"]),
        entries=entries,
        version=int(doc["version"]),
        base_dir=path.parent,
    )
