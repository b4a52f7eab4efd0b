"""Whole-model gradient verification against central finite differences.

The harness is a deliberately small end-to-end model — 2 recurrence
layers, 4x4 spatial maps, 3 input channels, 5 time steps, 2 classes — with
a combined classification + prediction-error loss so every parameter
(gates, prediction convs, inter-layer convs, head) sits on the loss path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data.clipfile import FeatureClip
from .model import ActionModel, ModelConfig
from .prednet import PredNetConfig
from .tensor import GradientTape, Tensor, finite_difference_gradient, relative_error
from .training import compute_loss

HARNESS_TIME_STEPS = 5


def build_harness(seed: int = 0) -> tuple[ActionModel, FeatureClip]:
    prednet_cfg = PredNetConfig(
        num_layers=2,
        repr_channels=(4, 4),
        input_channels=3,
        height=4,
        width=4,
        time_steps=HARNESS_TIME_STEPS,
        kernel_size=3,
    )
    model = ActionModel(ModelConfig(prednet=prednet_cfg, num_classes=2, seed=seed))
    rng = np.random.default_rng(seed + 1000)

    # Zero-initialized biases leave relu sitting exactly on its kink at step 1
    # (conv of the all-zero state), where central differences are meaningless.
    # The check therefore runs at a random non-degenerate point: every bias is
    # pushed well clear of zero relative to the probe step h.
    for name, p in model.named_parameters().items():
        if name.endswith(".bias"):
            magnitude = rng.uniform(0.02, 0.12, size=p.shape)
            p.data = magnitude * rng.choice([-1.0, 1.0], size=p.shape)
            if ".lstm." in name:
                ch = p.shape[0] // 4
                p.data[ch:2 * ch] += 1.0  # forget-gate section stays open

    frames = rng.normal(size=(HARNESS_TIME_STEPS, 3, 4, 4))
    clip = FeatureClip(frames=frames, label=1, source_id="gradcheck", pixels=False)
    return model, clip


def harness_loss(model: ActionModel, clip: FeatureClip) -> Tensor:
    forward = model.forward_clip(clip)
    return compute_loss(forward, clip.label, mode="combined", alpha=0.5)


@dataclass
class GradcheckResult:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    parameter_count: int = 0
    seconds: float = 0.0

    def worst(self) -> str:
        return max(self.per_param, key=self.per_param.get)


def run_gradcheck(seed: int = 0, h: float = 1e-5) -> GradcheckResult:
    """Max relative error of analytic vs finite-difference gradients, all params."""
    start = time.perf_counter()
    model, clip = build_harness(seed)
    params = model.named_parameters()

    with GradientTape() as tape:
        loss = harness_loss(model, clip)
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    for p in params.values():
        p.zero_grad()

    per_param: dict[str, float] = {}
    count = 0
    for name, p in params.items():
        numeric = finite_difference_gradient(lambda _: harness_loss(model, clip), p, h=h)
        per_param[name] = relative_error(analytic[name], numeric.data)
        count += p.size
    return GradcheckResult(
        max_rel_error=max(per_param.values()),
        per_param=per_param,
        parameter_count=count,
        seconds=time.perf_counter() - start,
    )
