"""SGD with momentum and coupled weight decay, plus the plateau LR rule.

The update is the classical formulation: decay is added to the gradient
before the velocity update. Validation loss counts as improved when it
beats the best seen by a relative threshold; after more than ``patience``
non-improving epochs in a row the learning rate drops by exactly 10x.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InputError
from .tensor import Tensor


def sgd_update(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.001,
) -> tuple[np.ndarray, np.ndarray]:
    """One SGD step: g = grad + wd*param; v' = momentum*v + g; p' = p - lr*v'."""
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ConfigurationError(
            f"sgd_update: mismatched shapes param={param.shape} grad={grad.shape} "
            f"velocity={velocity.shape}"
        )
    g = grad + weight_decay * param
    new_velocity = momentum * velocity + g
    return param - lr * new_velocity, new_velocity


@dataclass(frozen=True)
class PlateauState:
    """Learning-rate schedule state; lr only ever decreases, by factors of 10."""

    lr: float
    best_val: float | None = None
    epochs_since_best: int = 0
    patience: int = 3
    threshold: float = 1e-3


def plateau_schedule(state: PlateauState, val_loss: float) -> PlateauState:
    """Fold one validation loss into the schedule."""
    if not np.isfinite(val_loss):
        raise InputError(f"validation loss must be finite, got {val_loss}")
    if state.best_val is None or val_loss < state.best_val * (1.0 - state.threshold):
        return replace(state, best_val=float(val_loss), epochs_since_best=0)
    counter = state.epochs_since_best + 1
    if counter > state.patience:
        return replace(state, lr=state.lr / 10.0, epochs_since_best=0)
    return replace(state, epochs_since_best=counter)


class SGDOptimizer:
    """Velocity buffers plus schedule state for a named parameter set."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.001,
        patience: int = 3,
        threshold: float = 1e-3,
    ):
        if lr <= 0:
            raise ConfigurationError(f"initial learning rate must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigurationError(f"momentum must be in [0, 1), got {momentum}")
        if weight_decay < 0:
            raise ConfigurationError(f"weight decay must be nonnegative, got {weight_decay}")
        self.params = dict(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: dict[str, np.ndarray] = {
            name: np.zeros_like(p.data) for name, p in self.params.items()
        }
        self.schedule = PlateauState(lr=lr, patience=patience, threshold=threshold)

    @property
    def lr(self) -> float:
        return self.schedule.lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, grad_scale: float = 1.0) -> None:
        """Apply one update from the accumulated ``.grad`` of every parameter."""
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            p.data, self.velocities[name] = sgd_update(
                p.data,
                grad * grad_scale,
                self.velocities[name],
                lr=self.schedule.lr,
                momentum=self.momentum,
                weight_decay=self.weight_decay,
            )

    def observe_validation(self, val_loss: float) -> None:
        self.schedule = plateau_schedule(self.schedule, val_loss)
