"""Per-step feature fusion, classification, and across-time score averaging.

Each step's frame feature and representation maps are global-max-pooled
and concatenated (frame feature first, then R by ascending layer) into one
vector for a linear classification layer. Clip-level scores are the
arithmetic mean of the per-step score vectors; the predicted label is the
argmax of that mean, ties broken toward the lowest class index.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .prednet import StepOutput
from .tensor import Tensor, average, concat, global_max_pool, linear


def fuse_step_features(step: StepOutput) -> Tensor:
    """Max-pool A0 and every R, concatenated in that fixed order."""
    pooled = [global_max_pool(step.A0)] + [global_max_pool(r) for r in step.R]
    return concat(pooled)


def classify_step(fused: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Raw per-class scores; softmax lives in the loss, not here."""
    return linear(fused, weight, bias)


def aggregate_scores(scores: list[Tensor]) -> Tensor:
    """Elementwise mean of the per-step score vectors."""
    if not scores:
        raise UsageError("aggregate_scores needs at least one score vector")
    return average(scores)


def argmax_label(scores: Tensor) -> int:
    """Lowest-index argmax, the deterministic tie-break."""
    return int(np.argmax(scores.data))


def predict_clip(model, clip) -> tuple[int, Tensor, list[Tensor]]:
    """Run a clip through ``model``: (label, mean scores, per-step scores)."""
    per_step = model.forward_clip(clip).scores
    final = aggregate_scores(per_step)
    return argmax_label(final), final, per_step
