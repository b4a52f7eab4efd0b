"""Frame sampling, feature-clip files, manifests, and the synthetic motion benchmark."""

from .clipfile import (
    DatasetManifest,
    FeatureClip,
    ManifestEntry,
    load_manifest,
    read_feature_clip,
    save_manifest,
    write_feature_clip,
)
from .sampling import preprocess_frame, sample_window, subsample_eval, subsample_train
from .shapes import MovingShapesConfig, ShapeClassSpec, generate_moving_shapes

__all__ = [
    "DatasetManifest",
    "FeatureClip",
    "ManifestEntry",
    "MovingShapesConfig",
    "ShapeClassSpec",
    "generate_moving_shapes",
    "load_manifest",
    "preprocess_frame",
    "read_feature_clip",
    "sample_window",
    "save_manifest",
    "subsample_eval",
    "subsample_train",
    "write_feature_clip",
]
