"""Clip discovery, frame decoding, and the export loop.

Input layout: one subdirectory per class under the input root, each
holding video files and/or frame folders (directories of image files in
name order). Undecodable clips are skipped with a warning; the summary
carries the skip count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .backbone import IMAGENET_MEAN, IMAGENET_STD, Backbone
from .pcfv import write_feature_file
from .sampling import select_frame_indices

log = logging.getLogger("feature_exporter")

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
MANIFEST_VERSION = 1


@dataclass
class ExportJob:
    input_dir: Path
    output_dir: Path
    backbone: Backbone
    classes: list[str]  # ordered; label = index
    frames_per_clip: int = 90
    split: str = "export"
    workers: int = 1
    mean: tuple[float, ...] = IMAGENET_MEAN
    std: tuple[float, ...] = IMAGENET_STD


@dataclass
class ExportSummary:
    exported: int = 0
    skipped: int = 0
    manifest_path: Path | None = None
    skipped_clips: list[str] = field(default_factory=list)


class ClipDecodeError(Exception):
    pass


def discover_classes(input_dir: Path) -> list[str]:
    classes = sorted(p.name for p in input_dir.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"no class subdirectories under {input_dir}")
    return classes


def discover_clips(input_dir: Path, classes: list[str]) -> list[tuple[Path, int]]:
    clips = []
    for label, name in enumerate(classes):
        class_dir = input_dir / name
        if not class_dir.is_dir():
            raise ValueError(f"class directory missing: {class_dir}")
        for entry in sorted(class_dir.iterdir()):
            if entry.is_file() and entry.suffix.lower() in VIDEO_SUFFIXES:
                clips.append((entry, label))
            elif entry.is_dir() and any(
                f.suffix.lower() in IMAGE_SUFFIXES for f in entry.iterdir()
            ):
                clips.append((entry, label))
    return clips


def _decode_frame_folder(path: Path) -> list[Path]:
    frames = sorted(
        f for f in path.iterdir() if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES
    )
    if not frames:
        raise ClipDecodeError(f"{path}: no image frames")
    return frames


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32).transpose(2, 0, 1)


def _decode_video_frames(path: Path, indices: list[int]) -> list[np.ndarray]:
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover
        raise ClipDecodeError(f"{path}: OpenCV unavailable for video decoding") from exc
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ClipDecodeError(f"{path}: cannot open video")
    frames: list[np.ndarray] = []
    wanted = set(indices)
    position = 0
    max_index = max(indices)
    while position <= max_index:
        ok, frame = capture.read()
        if not ok:
            break
        if position in wanted:
            rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
            frames.append(rgb.astype(np.float32).transpose(2, 0, 1))
        position += 1
    capture.release()
    if position == 0:
        raise ClipDecodeError(f"{path}: no decodable frames")
    by_index = {}
    decoded_positions = [i for i in sorted(wanted) if i < position]
    for pos, frame in zip(decoded_positions, frames):
        by_index[pos] = frame
    # clips shorter than the header claimed: loop over what actually decoded
    return [by_index[i if i < position else i % position] for i in indices]


def _count_video_frames(path: Path) -> int:
    import cv2

    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ClipDecodeError(f"{path}: cannot open video")
    count = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
    capture.release()
    if count <= 0:
        raise ClipDecodeError(f"{path}: unreadable frame count")
    return count


def center_crop(frame: np.ndarray, size: int) -> np.ndarray:
    _, h, w = frame.shape
    if h < size or w < size:
        raise ClipDecodeError(f"frame {h}x{w} smaller than crop {size}")
    top, left = (h - size) // 2, (w - size) // 2
    return frame[:, top:top + size, left:left + size]


def preprocess(frames: list[np.ndarray], crop: int, mean, std) -> np.ndarray:
    mean_arr = np.asarray(mean, dtype=np.float32).reshape(-1, 1, 1)
    std_arr = np.asarray(std, dtype=np.float32).reshape(-1, 1, 1)
    stacked = np.stack([center_crop(f, crop) for f in frames])
    return (stacked / 255.0 - mean_arr) / std_arr


def export_clip(job: ExportJob, source: Path, label: int, out_path: Path) -> None:
    if source.is_dir():
        frame_paths = _decode_frame_folder(source)
        indices = select_frame_indices(len(frame_paths), job.frames_per_clip)
        raw = [_load_image(frame_paths[i]) for i in indices]
    else:
        total = _count_video_frames(source)
        indices = select_frame_indices(total, job.frames_per_clip)
        raw = _decode_video_frames(source, indices)
    batch = preprocess(raw, job.backbone.crop, job.mean, job.std)
    features = job.backbone.features(batch)
    write_feature_file(features, label, out_path)


def run_export(job: ExportJob) -> ExportSummary:
    job.output_dir.mkdir(parents=True, exist_ok=True)
    clips = discover_clips(job.input_dir, job.classes)
    summary = ExportSummary()
    entries: list[dict] = []

    def work(item: tuple[Path, int]) -> tuple[str, int] | None:
        source, label = item
        rel = f"{job.classes[label]}_{source.stem}.pcfv"
        try:
            export_clip(job, source, label, job.output_dir / rel)
            return rel, label
        except (ClipDecodeError, OSError) as exc:
            log.warning("skipping %s: %s", source, exc)
            summary.skipped += 1
            summary.skipped_clips.append(str(source))
            return None

    if job.workers > 1:
        with ThreadPoolExecutor(max_workers=job.workers) as pool:
            results = list(pool.map(work, clips))
    else:
        results = [work(item) for item in clips]

    for result in results:
        if result is None:
            continue
        rel, label = result
        entries.append({"path": rel, "label": label, "frames": job.frames_per_clip})
        summary.exported += 1

    manifest = {
        "version": MANIFEST_VERSION,
        "classes": job.classes,
        "split": job.split,
        "entries": entries,
        "backbone": job.backbone.identifier,
    }
    summary.manifest_path = job.output_dir / f"{job.split}.json"
    summary.manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return summary
