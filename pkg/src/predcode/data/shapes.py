"""Synthetic motion-only benchmark: moving shapes whose classes differ only
in temporal ordering.

Every class draws shape kind, size, intensity, and start position from the
same distributions; motion wraps around the canvas, so the position at any
single time step is uniform for every class. A reversal class renders a
clip with its base class's dynamics and then reverses the frame order.
Consequently single frames carry no class information at all: any
above-chance accuracy must come from temporal modeling.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .clipfile import DatasetManifest, FeatureClip, ManifestEntry, save_manifest, write_feature_clip

SHAPE_KINDS = ("square", "plus", "diamond")

# Split ids feed per-clip seed derivation; order is part of the format.
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ShapeClassSpec:
    """One motion class: a velocity, or a frame-reversal of another class."""

    name: str
    velocity: tuple[int, int] = (1, 0)  # (vx, vy) pixels per frame, wrapping
    reverse_of: str | None = None


DEFAULT_CLASSES = (
    ShapeClassSpec("right", (1, 0)),
    ShapeClassSpec("left", (1, 0), reverse_of="right"),
    ShapeClassSpec("down", (0, 1)),
    ShapeClassSpec("up", (0, 1), reverse_of="down"),
)


@dataclass(frozen=True)
class MovingShapesConfig:
    canvas: int = 32
    frames: int = 90
    classes: tuple[ShapeClassSpec, ...] = DEFAULT_CLASSES
    shape_kinds: tuple[str, ...] = SHAPE_KINDS
    size_range: tuple[int, int] = (4, 10)
    intensity_range: tuple[float, float] = (128.0, 255.0)
    noise_sigma: float = 0.0
    seed: int = 7

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigurationError("need at least 2 motion classes")
        if self.size_range[1] > self.canvas:
            raise ConfigurationError(
                f"canvas {self.canvas} too small for shapes up to size {self.size_range[1]}"
            )
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigurationError("class names must be unique")
        for c in self.classes:
            if c.reverse_of is not None and c.reverse_of not in names:
                raise ConfigurationError(f"{c.name}: reverse_of {c.reverse_of!r} is not a class")
        for kind in self.shape_kinds:
            if kind not in SHAPE_KINDS:
                raise ConfigurationError(f"unknown shape kind {kind!r}")

    def base_spec(self, spec: ShapeClassSpec) -> ShapeClassSpec:
        if spec.reverse_of is None:
            return spec
        by_name = {c.name: c for c in self.classes}
        return by_name[spec.reverse_of]

    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]


def _shape_stamp(kind: str, size: int, canvas: int) -> np.ndarray:
    """Binary mask of the shape anchored at the canvas origin."""
    stamp = np.zeros((canvas, canvas), dtype=np.float64)
    if kind == "square":
        stamp[:size, :size] = 1.0
    elif kind == "plus":
        arm = max(size // 3, 1)
        mid = size // 2
        stamp[mid - arm // 2: mid + (arm + 1) // 2, :size] = 1.0
        stamp[:size, mid - arm // 2: mid + (arm + 1) // 2] = 1.0
    elif kind == "diamond":
        mid = size // 2
        for y in range(size):
            for x in range(size):
                if abs(y - mid) + abs(x - mid) <= mid:
                    stamp[y, x] = 1.0
    else:
        raise ConfigurationError(f"unknown shape kind {kind!r}")
    return stamp


def render_base_clip(cfg: MovingShapesConfig, spec: ShapeClassSpec, rng: np.random.Generator) -> np.ndarray:
    """[T, 1, H, W] pixel clip of ``spec``'s base dynamics (no reversal applied)."""
    kind = str(rng.choice(list(cfg.shape_kinds)))
    size = int(rng.integers(cfg.size_range[0], cfg.size_range[1] + 1))
    intensity = float(rng.uniform(*cfg.intensity_range))
    x0 = int(rng.integers(0, cfg.canvas))
    y0 = int(rng.integers(0, cfg.canvas))
    stamp = _shape_stamp(kind, size, cfg.canvas) * intensity
    vx, vy = spec.velocity

    clip = np.empty((cfg.frames, 1, cfg.canvas, cfg.canvas), dtype=np.float64)
    for t in range(cfg.frames):
        frame = np.roll(stamp, ((y0 + t * vy) % cfg.canvas, (x0 + t * vx) % cfg.canvas), axis=(0, 1))
        if cfg.noise_sigma > 0:
            frame = frame + rng.normal(0.0, cfg.noise_sigma, size=frame.shape)
            frame = np.clip(frame, 0.0, 255.0)
        clip[t, 0] = frame
    # round through float32 so in-memory clips equal their serialized form
    return clip.astype(np.float32).astype(np.float64)


def clip_rng(cfg: MovingShapesConfig, split: str, class_index: int, clip_index: int) -> np.random.Generator:
    """Independent per-clip stream so generation parallelizes and reproduces."""
    return np.random.default_rng([cfg.seed, SPLITS.index(split), class_index, clip_index])


def render_clip(cfg: MovingShapesConfig, split: str, class_index: int, clip_index: int) -> FeatureClip:
    spec = cfg.classes[class_index]
    rng = clip_rng(cfg, split, class_index, clip_index)
    frames = render_base_clip(cfg, cfg.base_spec(spec), rng)
    if spec.reverse_of is not None:
        frames = frames[::-1].copy()
    return FeatureClip(
        frames=frames,
        label=class_index,
        source_id=f"{split}_{spec.name}_{clip_index:04d}",
        pixels=True,
    )


def generate_moving_shapes(
    cfg: MovingShapesConfig,
    out_dir: str | Path,
    clips_per_class: dict[str, int],
) -> dict[str, DatasetManifest]:
    """Write PCFV clips plus one manifest per split; returns the manifests.

    ``clips_per_class`` maps split name (train/val/test) to the clip count
    per class; splits with count 0 are skipped.
    """
    out_dir = Path(out_dir)
    manifests: dict[str, DatasetManifest] = {}
    for split, count in clips_per_class.items():
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}, expected one of {SPLITS}")
        if count <= 0:
            continue
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for class_index, spec in enumerate(cfg.classes):
            for i in range(count):
                clip = render_clip(cfg, split, class_index, i)
                rel = f"{split}/{spec.name}_{i:04d}.pcfv"
                write_feature_clip(clip, out_dir / rel)
                entries.append(ManifestEntry(path=rel, label=class_index, frames=cfg.frames))
        manifest = DatasetManifest(
            classes=cfg.class_names(), split=split, entries=entries, base_dir=out_dir
        )
        save_manifest(manifest, out_dir / f"{split}.json")
        manifests[split] = manifest
    return manifests
