"""Frame-level feature backbones.

``resnet50`` is the paper-profile backbone: the torchvision model with its
final average-pool and fully connected layers removed, emitting [2048, 7, 7]
per 224x224 frame. Weights load from a local ``.pth`` file; without one the
network keeps its random initialization (shapes are unchanged, useful for
plumbing runs) and the recorded identifier says so.

``stub[:channels]`` is a dependency-light development backbone: the frame
average-pooled to 7x7 and tiled across channels. It exists so pipeline
tests do not pay for a 25M-parameter forward pass.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class Backbone:
    identifier: str
    crop: int

    def features(self, frames: np.ndarray) -> np.ndarray:
        """[N, 3, crop, crop] normalized frames -> [N, C, H, W] float32."""
        raise NotImplementedError


class ResNet50Backbone(Backbone):
    crop = 224

    def __init__(self, weights: str | Path | None = None, batch_size: int = 16):
        import torch
        from torchvision.models import resnet50

        self._torch = torch
        net = resnet50(weights=None)
        if weights is not None:
            state = torch.load(weights, map_location="cpu", weights_only=True)
            net.load_state_dict(state)
            self.identifier = f"resnet50:{Path(weights).name}"
        else:
            self.identifier = "resnet50:untrained"
        # drop the last 2 layers (global average pool + fc); keep conv features
        modules = list(net.children())[:-2]
        self._features = torch.nn.Sequential(*modules).eval()
        self.batch_size = batch_size

    def features(self, frames: np.ndarray) -> np.ndarray:
        torch = self._torch
        outputs = []
        with torch.no_grad():
            for start in range(0, len(frames), self.batch_size):
                batch = torch.from_numpy(frames[start:start + self.batch_size]).float()
                outputs.append(self._features(batch).numpy())
        return np.concatenate(outputs, axis=0).astype(np.float32)


class StubBackbone(Backbone):
    crop = 224

    def __init__(self, channels: int = 8):
        if channels < 1:
            raise ValueError(f"stub channels must be >= 1, got {channels}")
        self.channels = channels
        self.identifier = f"stub:{channels}"

    def features(self, frames: np.ndarray) -> np.ndarray:
        n, c, h, w = frames.shape
        cell_h, cell_w = h // 7, w // 7
        pooled = frames[:, :, : cell_h * 7, : cell_w * 7]
        pooled = pooled.reshape(n, c, 7, cell_h, 7, cell_w).mean(axis=(3, 5))
        gray = pooled.mean(axis=1, keepdims=True)  # [N, 1, 7, 7]
        scale = np.linspace(1.0, 2.0, self.channels, dtype=np.float32)[None, :, None, None]
        return (gray * scale).astype(np.float32)


def load_backbone(name: str, weights: str | Path | None = None) -> Backbone:
    if name == "resnet50":
        return ResNet50Backbone(weights=weights)
    if name == "stub" or name.startswith("stub:"):
        channels = int(name.split(":", 1)[1]) if ":" in name else 8
        return StubBackbone(channels)
    raise ValueError(f"unknown backbone {name!r} (expected resnet50 or stub[:channels])")
