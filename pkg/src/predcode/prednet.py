"""The 2-layer predictive-coding recurrence.

Each time step runs a top-down phase (convLSTM updates of the
representation units, highest layer first) followed by a bottom-up phase
(per-layer prediction of the incoming input, rectified error computation,
and error propagation upward). The very first step skips top-down and
computes the bottom-up pass against the all-zero initial representations.

Per layer the recurrence keeps three pieces of state: the representation
map R, the convLSTM cell memory, and the previous step's error map E.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, UsageError
from .tensor import (
    Tensor,
    abs_,
    add,
    concat,
    conv2d,
    mean_,
    mul,
    narrow,
    relu,
    scale,
    sigmoid,
    sub,
    tanh,
)

ERROR_MODES = ("rectified_split", "absolute")


@dataclass(frozen=True)
class PredNetConfig:
    """Architecture hyperparameters; every unit shape derives from these."""

    num_layers: int = 2
    repr_channels: tuple[int, ...] = (64, 64)
    input_channels: int = 2048
    height: int = 7
    width: int = 7
    time_steps: int = 30
    kernel_size: int = 3
    error_mode: str = "rectified_split"
    # Multiplier on the gate-conv init limit (1/sqrt(fan_in)). Small desk
    # models need gain > 1: at gain 1 the representation units start an
    # order of magnitude weaker than the frame features and the head
    # starves the recurrence of gradient.
    lstm_gain: float = 1.0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigurationError(f"need at least 1 layer, got {self.num_layers}")
        if self.lstm_gain <= 0:
            raise ConfigurationError(f"lstm_gain must be positive, got {self.lstm_gain}")
        if len(self.repr_channels) != self.num_layers:
            raise ConfigurationError(
                f"repr_channels has {len(self.repr_channels)} entries for {self.num_layers} layers"
            )
        if self.input_channels < 1 or any(c < 1 for c in self.repr_channels):
            raise ConfigurationError("all channel counts must be >= 1")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ConfigurationError(f"kernel size must be odd, got {self.kernel_size}")
        if self.height < 1 or self.width < 1 or self.time_steps < 1:
            raise ConfigurationError("spatial dims and time steps must be >= 1")
        if self.error_mode not in ERROR_MODES:
            raise ConfigurationError(f"error_mode must be one of {ERROR_MODES}, got {self.error_mode!r}")

    def pred_channels(self, layer: int) -> int:
        """Channels of the input unit A at ``layer`` (= channels of its prediction)."""
        return self.input_channels if layer == 0 else self.repr_channels[layer]

    def error_channels(self, layer: int) -> int:
        """E concatenates two rectified halves, so always 2x the prediction."""
        return 2 * self.pred_channels(layer)

    def lstm_input_channels(self, layer: int) -> int:
        """Channels fed to the layer's convLSTM: E, plus R from above when present."""
        c = self.error_channels(layer)
        if layer < self.num_layers - 1:
            c += self.repr_channels[layer + 1]
        return c

    @property
    def fused_length(self) -> int:
        """Length of the per-step fusion vector: input channels + all R channels."""
        return self.input_channels + sum(self.repr_channels)


@dataclass
class PredNetState:
    """Recurrent state carried between steps; all zeros before step 1."""

    R: list[Tensor]
    cell: list[Tensor]
    E: list[Tensor]
    t: int = 0


@dataclass
class StepOutput:
    """Everything one step exposes to the fusion head and the losses."""

    A0: Tensor
    Ahat: list[Tensor]
    E: list[Tensor]
    R: list[Tensor]
    t: int = 0


@dataclass
class ConvLSTMParams:
    """Fused four-gate convolution over concat(inputs, hidden).

    Gate order along the output channel axis is (input, forget, output,
    candidate); the forget-gate bias section starts at +1.
    """

    weight: Tensor  # [4*C_h, C_x + C_h, k, k]
    bias: Tensor    # [4*C_h]
    hidden_channels: int


def conv_lstm_step(x: Tensor, h: Tensor, cell: Tensor, params: ConvLSTMParams) -> tuple[Tensor, Tensor]:
    """One convLSTM update: returns (h', cell')."""
    ch = params.hidden_channels
    expected = x.shape[0] + ch
    if params.weight.shape[1] != expected:
        raise ConfigurationError(
            f"convLSTM weight expects {params.weight.shape[1]} input channels, "
            f"got concat(x={x.shape[0]}, h={ch}) = {expected}"
        )
    gates = conv2d(concat([x, h]), params.weight, params.bias)
    i = sigmoid(narrow(gates, 0, ch))
    f = sigmoid(narrow(gates, ch, ch))
    o = sigmoid(narrow(gates, 2 * ch, ch))
    g = tanh(narrow(gates, 3 * ch, ch))
    new_cell = add(mul(f, cell), mul(i, g))
    new_h = mul(o, tanh(new_cell))
    return new_h, new_cell


class PredNet:
    """Parameters plus the step/unroll machinery of the recurrence.

    Per layer l the trainable pieces are:
      - ``layer{l}.lstm``   fused gate convolution of the representation unit
      - ``layer{l}.ahat``   convolution R_l -> prediction of A_l
      - ``layer{l}.input``  convolution E_{l-1} -> A_l (layers above 0 only)
    """

    def __init__(self, config: PredNetConfig, rng: np.random.Generator | None = None):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        k = config.kernel_size
        self.params: dict[str, Tensor] = {}

        def conv_param(name: str, c_out: int, c_in: int, gain: float = 1.0) -> tuple[Tensor, Tensor]:
            fan_in = c_in * k * k
            limit = gain / np.sqrt(fan_in)
            weight = Tensor(rng.uniform(-limit, limit, size=(c_out, c_in, k, k)), requires_grad=True)
            bias = Tensor(np.zeros(c_out), requires_grad=True)
            self.params[f"{name}.weight"] = weight
            self.params[f"{name}.bias"] = bias
            return weight, bias

        self._lstm: list[ConvLSTMParams] = []
        self._ahat: list[tuple[Tensor, Tensor]] = []
        self._input: list[tuple[Tensor, Tensor] | None] = []
        for layer in range(config.num_layers):
            ch = config.repr_channels[layer]
            w, b = conv_param(
                f"layer{layer}.lstm",
                4 * ch,
                config.lstm_input_channels(layer) + ch,
                gain=config.lstm_gain,
            )
            b.data[ch:2 * ch] = 1.0  # forget-gate bias starts open
            self._lstm.append(ConvLSTMParams(w, b, ch))
            self._ahat.append(conv_param(f"layer{layer}.ahat", config.pred_channels(layer), ch))
            if layer > 0:
                self._input.append(
                    conv_param(f"layer{layer}.input", config.pred_channels(layer), config.error_channels(layer - 1))
                )
            else:
                self._input.append(None)

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def initial_state(self) -> PredNetState:
        """All units start at exactly zero."""
        cfg = self.config
        zeros = lambda c: Tensor(np.zeros((c, cfg.height, cfg.width)))
        return PredNetState(
            R=[zeros(cfg.repr_channels[l]) for l in range(cfg.num_layers)],
            cell=[zeros(cfg.repr_channels[l]) for l in range(cfg.num_layers)],
            E=[zeros(cfg.error_channels(l)) for l in range(cfg.num_layers)],
            t=0,
        )

    def update_representations(self, prev: PredNetState) -> tuple[list[Tensor], list[Tensor]]:
        """Top-down convLSTM sweep; layer l sees the fresh R of layer l+1."""
        if prev is None:
            raise UsageError("update_representations called before state initialization")
        cfg = self.config
        new_r: list[Tensor | None] = [None] * cfg.num_layers
        new_c: list[Tensor | None] = [None] * cfg.num_layers
        for layer in reversed(range(cfg.num_layers)):
            if layer == cfg.num_layers - 1:
                x = prev.E[layer]
            else:
                x = concat([prev.E[layer], new_r[layer + 1]])
            new_r[layer], new_c[layer] = conv_lstm_step(
                x, prev.R[layer], prev.cell[layer], self._lstm[layer]
            )
        return new_r, new_c

    def propagate_predictions(
        self, r: list[Tensor], a0: Tensor
    ) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
        """Bottom-up sweep: predictions, errors, and the next layer's input."""
        cfg = self.config
        if a0.shape != (cfg.input_channels, cfg.height, cfg.width):
            raise InputError(
                f"frame feature must be {(cfg.input_channels, cfg.height, cfg.width)}, got {a0.shape}"
            )
        a = a0
        a_list, ahat_list, e_list = [a0], [], []
        for layer in range(cfg.num_layers):
            w, b = self._ahat[layer]
            ahat = relu(conv2d(r[layer], w, b))
            if cfg.error_mode == "rectified_split":
                e = concat([relu(sub(a, ahat)), relu(sub(ahat, a))])
            else:
                e = concat([abs_(sub(ahat, a)), abs_(sub(a, ahat))])
            ahat_list.append(ahat)
            e_list.append(e)
            if layer + 1 < cfg.num_layers:
                w_in, b_in = self._input[layer + 1]
                a = relu(conv2d(e, w_in, b_in))
                a_list.append(a)
        return ahat_list, e_list, a_list

    def step(self, state: PredNetState, a0: Tensor) -> tuple[PredNetState, StepOutput]:
        """One full time step. The first step keeps R at zero (no top-down)."""
        if state is None:
            raise UsageError("step called before state initialization")
        if state.t == 0:
            r, cell = state.R, state.cell
        else:
            r, cell = self.update_representations(state)
        ahat, e, _ = self.propagate_predictions(r, a0)
        t = state.t + 1
        return PredNetState(R=r, cell=cell, E=e, t=t), StepOutput(A0=a0, Ahat=ahat, E=e, R=r, t=t)

    def unroll(self, features: list[Tensor]) -> list[StepOutput]:
        """Thread zero-initialized state through exactly ``time_steps`` frames."""
        if len(features) != self.config.time_steps:
            raise InputError(
                f"clip has {len(features)} frames, config expects {self.config.time_steps}"
            )
        state = self.initial_state()
        outputs = []
        for a0 in features:
            state, out = self.step(state, a0)
            outputs.append(out)
        return outputs


def default_layer_weights(num_layers: int) -> tuple[float, ...]:
    """Bottom layer weighted 1, every layer above 0.1."""
    return tuple(1.0 if l == 0 else 0.1 for l in range(num_layers))


def default_time_weights(time_steps: int) -> tuple[float, ...]:
    """Step 1 unweighted (its error is forced by zero init), the rest uniform."""
    if time_steps == 1:
        return (0.0,)
    return (0.0,) + (1.0 / (time_steps - 1),) * (time_steps - 1)


def prediction_error_loss(
    outputs: list[StepOutput],
    layer_weights: tuple[float, ...] | None = None,
    time_weights: tuple[float, ...] | None = None,
) -> Tensor:
    """Weighted mean error magnitude: sum_t mu_t sum_l lambda_l mean(E_l at t)."""
    if not outputs:
        raise UsageError("prediction_error_loss needs at least one step output")
    num_layers = len(outputs[0].E)
    lam = layer_weights if layer_weights is not None else default_layer_weights(num_layers)
    mu = time_weights if time_weights is not None else default_time_weights(len(outputs))
    if len(mu) != len(outputs):
        raise ConfigurationError(f"{len(mu)} time weights for {len(outputs)} steps")
    if len(lam) != num_layers:
        raise ConfigurationError(f"{len(lam)} layer weights for {num_layers} layers")
    if any(v < 0 for v in lam) or any(v < 0 for v in mu):
        raise ConfigurationError("loss weights must be nonnegative")

    total: Tensor | None = None
    for out, mu_t in zip(outputs, mu):
        if mu_t == 0.0:
            continue
        for e, lam_l in zip(out.E, lam):
            if lam_l == 0.0:
                continue
            term = scale(mean_(e), mu_t * lam_l)
            total = term if total is None else add(total, term)
    if total is None:
        return Tensor(np.zeros(()))  # constant: no weighted terms
    return total
