"""Full model assembly: optional frame encoder, recurrence, fusion head.

Two input modes share one forward path. Pixel clips run through the
built-in encoder to produce per-frame features; feature clips (e.g.
exported from a pretrained backbone) feed the recurrence directly. With
the recurrence disabled the model degrades to the frame-only baseline:
per-frame pooled features into the same kind of linear head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import BuiltinEncoder, EncoderConfig
from .errors import ConfigurationError, InputError
from .fusion import classify_step, fuse_step_features
from .prednet import PredNet, PredNetConfig, StepOutput
from .tensor import Tensor, global_max_pool, linear


@dataclass(frozen=True)
class ModelConfig:
    prednet: PredNetConfig
    num_classes: int
    encoder: EncoderConfig | None = None
    use_prednet: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {self.num_classes}")
        if self.encoder is not None:
            if self.encoder.out_channels != self.prednet.input_channels:
                raise ConfigurationError(
                    f"encoder emits {self.encoder.out_channels} channels but the "
                    f"recurrence expects {self.prednet.input_channels}"
                )

    @property
    def fused_length(self) -> int:
        if self.use_prednet:
            return self.prednet.fused_length
        return self.prednet.input_channels


@dataclass
class ClipForward:
    """Per-step score vectors plus, when the recurrence ran, its step outputs."""

    scores: list[Tensor]
    steps: list[StepOutput] | None = None


class ActionModel:
    """Encoder (optional) -> recurrence (optional) -> per-step head."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder = BuiltinEncoder(config.encoder, rng) if config.encoder else None
        self.prednet = PredNet(config.prednet, rng) if config.use_prednet else None

        fused = config.fused_length
        limit = 1.0 / np.sqrt(fused)
        self.head_weight = Tensor(
            rng.uniform(-limit, limit, size=(config.num_classes, fused)), requires_grad=True
        )
        self.head_bias = Tensor(np.zeros(config.num_classes), requires_grad=True)

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        if self.encoder is not None:
            params.update({f"encoder.{k}": v for k, v in self.encoder.named_parameters().items()})
        if self.prednet is not None:
            params.update({f"prednet.{k}": v for k, v in self.prednet.named_parameters().items()})
        params["head.weight"] = self.head_weight
        params["head.bias"] = self.head_bias
        return params

    def trainable_parameters(self) -> dict[str, Tensor]:
        """Everything except a frozen encoder's parameters."""
        params = self.named_parameters()
        if self.encoder is not None and not self.encoder.config.trainable:
            params = {k: v for k, v in params.items() if not k.startswith("encoder.")}
        return params

    def _frame_features(self, frames: np.ndarray, pixels: bool) -> list[Tensor]:
        cfg = self.config.prednet
        feats = []
        for t in range(frames.shape[0]):
            frame = Tensor(frames[t])
            if pixels:
                if self.encoder is None:
                    raise ConfigurationError("pixel input requires an encoder")
                feats.append(self.encoder.encode(frame))
            else:
                if frame.shape != (cfg.input_channels, cfg.height, cfg.width):
                    raise InputError(
                        f"feature frame shape {frame.shape} does not match config "
                        f"{(cfg.input_channels, cfg.height, cfg.width)}"
                    )
                feats.append(frame)
        return feats

    def forward_clip(self, clip) -> ClipForward:
        """``clip`` carries float frames [T,C,H,W] and a ``pixels`` flag."""
        frames = np.asarray(clip.frames, dtype=np.float64)
        if frames.ndim != 4:
            raise InputError(f"clip frames must be [T,C,H,W], got shape {frames.shape}")
        features = self._frame_features(frames, clip.pixels)

        if self.prednet is not None:
            steps = self.prednet.unroll(features)
            scores = [
                classify_step(fuse_step_features(s), self.head_weight, self.head_bias)
                for s in steps
            ]
            return ClipForward(scores=scores, steps=steps)

        scores = [
            linear(global_max_pool(f), self.head_weight, self.head_bias) for f in features
        ]
        return ClipForward(scores=scores, steps=None)
