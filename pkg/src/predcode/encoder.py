"""Built-in desk-scale frame encoder.

Two stride-1 convolution + relu + 2x max-pool stages turn a preprocessed
frame into the feature map the recurrence consumes, standing in for a
large pretrained backbone. When ``trainable`` is off its parameters are
excluded from optimization (the "fixed weight" regime).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .tensor import Tensor, conv2d, max_pool2d, relu


@dataclass(frozen=True)
class EncoderConfig:
    in_channels: int = 1
    mid_channels: int = 8
    out_channels: int = 8
    kernel_size: int = 3
    trainable: bool = True

    def __post_init__(self):
        if min(self.in_channels, self.mid_channels, self.out_channels) < 1:
            raise ConfigurationError("encoder channel counts must be >= 1")
        if self.kernel_size % 2 == 0:
            raise ConfigurationError(f"encoder kernel must be odd, got {self.kernel_size}")

    def output_spatial(self, height: int, width: int) -> tuple[int, int]:
        """Each of the two pooling stages halves the spatial size."""
        if height % 4 or width % 4:
            raise ConfigurationError(f"encoder input {height}x{width} must be divisible by 4")
        return height // 4, width // 4


class BuiltinEncoder:
    def __init__(self, config: EncoderConfig, rng: np.random.Generator | None = None):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        k = config.kernel_size
        self.params: dict[str, Tensor] = {}

        def conv_param(name: str, c_out: int, c_in: int) -> tuple[Tensor, Tensor]:
            limit = 1.0 / np.sqrt(c_in * k * k)
            w = Tensor(rng.uniform(-limit, limit, size=(c_out, c_in, k, k)), requires_grad=True)
            b = Tensor(np.zeros(c_out), requires_grad=True)
            self.params[f"{name}.weight"] = w
            self.params[f"{name}.bias"] = b
            return w, b

        self._conv1 = conv_param("conv1", config.mid_channels, config.in_channels)
        self._conv2 = conv_param("conv2", config.out_channels, config.mid_channels)

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def encode(self, frame: Tensor) -> Tensor:
        """[C, H, W] preprocessed frame -> [out_channels, H/4, W/4] feature map."""
        if frame.shape[0] != self.config.in_channels:
            raise ConfigurationError(
                f"encoder expects {self.config.in_channels} input channels, got {frame.shape}"
            )
        self.config.output_spatial(frame.shape[1], frame.shape[2])
        x = max_pool2d(relu(conv2d(frame, *self._conv1)), 2)
        x = max_pool2d(relu(conv2d(x, *self._conv2)), 2)
        return x
