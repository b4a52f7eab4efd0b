"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation the model needs lives here as a pure function: stride-1
same-padding convolution, global/spatial max pooling, a dense layer, the
pointwise suite, concatenation, reductions, and a numerically stable
softmax cross-entropy. Ops record themselves on the active GradientTape
(if any); ``GradientTape.backward`` replays the records in exact reverse
execution order and accumulates gradients into ``Tensor.grad``.

All computation is float64. Float32 appears only at serialization
boundaries (feature files, checkpoints), never in math.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError, UsageError

__all__ = [
    "Tensor",
    "GradientTape",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "sigmoid",
    "tanh",
    "abs_",
    "concat",
    "narrow",
    "sum_",
    "mean_",
    "average",
    "conv2d",
    "max_pool2d",
    "global_max_pool",
    "linear",
    "softmax_cross_entropy",
    "finite_difference_gradient",
]


class Tensor:
    """A dense float64 array plus a gradient slot.

    ``requires_grad`` marks leaf tensors (parameters) whose gradients
    ``GradientTape.backward`` should materialize. Intermediates produced by
    ops never need the flag; the tape tracks them by identity.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.size == 0:
            raise ConfigurationError(f"tensor dimensions must all be >= 1, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def assert_finite(self, context: str = "tensor") -> None:
        if not np.all(np.isfinite(self.data)):
            raise InputError(f"{context} contains NaN or Inf values")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; the free functions do the real work.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


_TAPE_STACK = threading.local()


def _active_tape() -> "GradientTape | None":
    stack = getattr(_TAPE_STACK, "stack", None)
    if not stack:
        return None
    return stack[-1]


class GradientTape:
    """Ordered record of executed ops, replayed backward for gradients.

    Use as a context manager around the forward pass::

        with GradientTape() as tape:
            loss = model_loss(...)
        tape.backward(loss)

    A tape is single-writer: do not share one across threads while
    recording. Ops executed with no active tape run forward-only.
    """

    def __init__(self):
        # entry = (output, inputs, backward_fn); backward_fn(g) returns one
        # gradient array (or None) per input, in input order.
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._produced: set[int] = set()
        self._watched: dict[int, Tensor] = {}

    def __enter__(self) -> "GradientTape":
        stack = getattr(_TAPE_STACK, "stack", None)
        if stack is None:
            stack = _TAPE_STACK.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.stack.pop()

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> None:
        self._entries.append((output, inputs, backward_fn))
        self._produced.add(id(output))
        for t in inputs:
            if t.requires_grad:
                self._watched[id(t)] = t

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every watched leaf.

        Gradients of tensors used more than once are summed. Returns a dict
        mapping each requires_grad tensor seen by the tape to its gradient
        (an all-zero array when the tensor does not influence ``loss``).
        """
        if not self._entries:
            raise UsageError("backward() called on an empty tape")
        if loss.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = self._produced
        for output, inputs, backward_fn in reversed(self._entries):
            g = grads.pop(id(output), None)
            if g is None:
                continue
            in_grads = backward_fn(g)
            for t, gi in zip(inputs, in_grads):
                if gi is None:
                    continue
                if t.requires_grad or id(t) in produced:
                    key = id(t)
                    acc = grads.get(key)
                    grads[key] = gi if acc is None else acc + gi

        result: dict[Tensor, np.ndarray] = {}
        for key, t in self._watched.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(t.data)
            t.grad = g if t.grad is None else t.grad + g
            result[t] = g
        return result


def backward(tape: GradientTape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Free-function alias for ``tape.backward(loss)``."""
    return tape.backward(loss)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# Pointwise suite
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard (elementwise) product."""
    _check_same_shape(a, b, "hadamard")
    out = Tensor(a.data * b.data)
    tape = _active_tape()
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (no gradient w.r.t. the constant)."""
    c = float(c)
    out = Tensor(a.data * c)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, (a,), lambda g: (g * c,))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    tape = _active_tape()
    if tape is not None:
        mask = a.data > 0.0  # subgradient 0 at exactly 0
        tape.record(out, (a,), lambda g: (g * mask,))
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # computed by halves to avoid overflow in exp for large |x|
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, (a,), lambda g: (g * s * (1.0 - s),))
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, (a,), lambda g: (g * (1.0 - t * t),))
    return out


def abs_(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    tape = _active_tape()
    if tape is not None:
        sign = np.sign(a.data)  # subgradient 0 at exactly 0
        tape.record(out, (a,), lambda g: (g * sign,))
    return out


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along axis 0: channel axis for maps, plain for vectors."""
    if not tensors:
        raise UsageError("concat of an empty sequence")
    trailing = tensors[0].shape[1:]
    for t in tensors[1:]:
        if t.shape[1:] != trailing:
            raise ConfigurationError(
                f"concat: trailing dims differ, {tensors[0].shape} vs {t.shape}"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=0))
    tape = _active_tape()
    if tape is not None:
        sizes = [t.shape[0] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def bwd(g):
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

        tape.record(out, tuple(tensors), bwd)
    return out


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Slice ``length`` entries of axis 0 starting at ``start``."""
    if start < 0 or start + length > a.shape[0]:
        raise InputError(
            f"narrow: range [{start}, {start + length}) outside axis of size {a.shape[0]}"
        )
    out = Tensor(a.data[start:start + length])
    tape = _active_tape()
    if tape is not None:
        def bwd(g):
            full = np.zeros_like(a.data)
            full[start:start + length] = g
            return (full,)

        tape.record(out, (a,), bwd)
    return out


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def sum_(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data))
    tape = _active_tape()
    if tape is not None:
        shape = a.shape
        tape.record(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def mean_(a: Tensor) -> Tensor:
    out = Tensor(np.mean(a.data))
    tape = _active_tape()
    if tape is not None:
        shape, n = a.shape, a.size
        tape.record(out, (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),))
    return out


def average(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise arithmetic mean of same-shape tensors.

    Addends are summed in sorted order per element, so the result is
    bit-identical under permutation of the inputs.
    """
    if not tensors:
        raise UsageError("average of an empty sequence")
    first = tensors[0]
    for t in tensors[1:]:
        _check_same_shape(first, t, "average")
    n = len(tensors)
    stacked = np.sort(np.stack([t.data for t in tensors]), axis=0)
    out = Tensor(stacked.sum(axis=0) / n)
    tape = _active_tape()
    if tape is not None:
        tape.record(out, tuple(tensors), lambda g: (g / n,) * n)
    return out


# ---------------------------------------------------------------------------
# Convolution and pooling
# ---------------------------------------------------------------------------

def _zero_pad(x: np.ndarray, p: int) -> np.ndarray:
    """Zero-pad the two trailing (spatial) axes of a [C, H, W] array."""
    if p == 0:
        return x
    c, h, w = x.shape
    padded = np.zeros((c, h + 2 * p, w + 2 * p))
    padded[:, p:p + h, p:p + w] = x
    return padded


def _im2col(padded: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """[C, H+2p, W+2p] -> [C*k*k, H*W] patch matrix (channel, dy, dx major)."""
    c = padded.shape[0]
    cols = np.empty((c, k, k, h, w))
    for dy in range(k):
        for dx in range(k):
            cols[:, dy, dx] = padded[:, dy:dy + h, dx:dx + w]
    return cols.reshape(c * k * k, h * w)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Stride-1, zero same-padded 2-D convolution.

    ``x`` is [C_in, H, W], ``kernel`` [C_out, C_in, k, k] with odd k,
    ``bias`` [C_out]; output is [C_out, H, W]. Out-of-range input reads as 0.
    """
    if x.data.ndim != 3:
        raise ConfigurationError(f"conv2d: input must be [C,H,W], got {x.shape}")
    if kernel.data.ndim != 4:
        raise ConfigurationError(f"conv2d: kernel must be [C_out,C_in,k,k], got {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"conv2d: kernel must be square with odd size, got {kernel.shape}")
    if c_in != x.shape[0]:
        raise ConfigurationError(
            f"conv2d: kernel expects {c_in} input channels (kernel {kernel.shape}) "
            f"but input has {x.shape[0]} (input {x.shape})"
        )
    if bias.shape != (c_out,):
        raise ConfigurationError(f"conv2d: bias shape {bias.shape} does not match C_out={c_out}")

    k = kh
    p = (k - 1) // 2
    _, h, w = x.shape
    cols = _im2col(_zero_pad(x.data, p), k, h, w)  # [C_in*k*k, H*W]
    kmat = kernel.data.reshape(c_out, -1)
    out_data = (kmat @ cols).reshape(c_out, h, w) + bias.data[:, None, None]
    out = Tensor(out_data)

    tape = _active_tape()
    if tape is not None:
        def bwd(g):
            gflat = g.reshape(c_out, -1)
            g_bias = gflat.sum(axis=1)
            g_kernel = (gflat @ cols.T).reshape(kernel.shape)
            # input gradient = correlation of padded g with the flipped kernel
            g_cols = _im2col(_zero_pad(g, p), k, h, w)  # [C_out*k*k, H*W]
            k_flip = kernel.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c_in, -1)
            g_x = (k_flip @ g_cols).reshape(c_in, h, w)
            return g_x, g_kernel, g_bias

        tape.record(out, (x, kernel, bias), bwd)
    return out


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping spatial max pooling; H and W must divide by ``size``."""
    c, h, w = x.shape
    if h % size or w % size:
        raise ConfigurationError(f"max_pool2d: spatial dims {h}x{w} not divisible by {size}")
    ho, wo = h // size, w // size
    windows = x.data.reshape(c, ho, size, wo, size).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, size * size)
    idx = np.argmax(windows, axis=-1)  # first max in row-major window order
    out = Tensor(np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0])
    tape = _active_tape()
    if tape is not None:
        def bwd(g):
            gw = np.zeros((c, ho, wo, size * size))
            np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
            return (gw.reshape(c, ho, wo, size, size).transpose(0, 1, 3, 2, 4).reshape(c, h, w),)

        tape.record(out, (x,), bwd)
    return out


def global_max_pool(x: Tensor) -> Tensor:
    """[C, H, W] -> [C]; backward routes to the first (row-major) argmax."""
    if x.data.ndim != 3:
        raise ConfigurationError(f"global_max_pool: input must be [C,H,W], got {x.shape}")
    c = x.shape[0]
    flat = x.data.reshape(c, -1)
    idx = np.argmax(flat, axis=1)
    out = Tensor(flat[np.arange(c), idx])
    tape = _active_tape()
    if tape is not None:
        def bwd(g):
            gx = np.zeros_like(flat)
            gx[np.arange(c), idx] = g
            return (gx.reshape(x.shape),)

        tape.record(out, (x,), bwd)
    return out


# ---------------------------------------------------------------------------
# Dense head and loss
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """weight @ x + bias for a vector x: [D] x [K,D] -> [K]."""
    if x.data.ndim != 1 or weight.data.ndim != 2:
        raise ConfigurationError(f"linear: need vector and matrix, got {x.shape}, {weight.shape}")
    k, d = weight.shape
    if d != x.shape[0]:
        raise ConfigurationError(
            f"linear: weight expects input of length {d} (weight {weight.shape}) "
            f"but input has length {x.shape[0]}"
        )
    if bias.shape != (k,):
        raise ConfigurationError(f"linear: bias shape {bias.shape} does not match K={k}")
    out = Tensor(weight.data @ x.data + bias.data)
    tape = _active_tape()
    if tape is not None:
        xd, wd = x.data, weight.data
        tape.record(out, (x, weight, bias), lambda g: (wd.T @ g, np.outer(g, xd), g))
    return out


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], computed with max subtraction."""
    if logits.data.ndim != 1:
        raise ConfigurationError(f"softmax_cross_entropy: logits must be a vector, got {logits.shape}")
    n = logits.shape[0]
    label = int(label)
    if not 0 <= label < n:
        raise InputError(f"label {label} out of range for {n} classes")
    z = logits.data - np.max(logits.data)
    ez = np.exp(z)
    probs = ez / ez.sum()
    loss = Tensor(np.log(ez.sum()) - z[label])
    tape = _active_tape()
    if tape is not None:
        def bwd(g):
            gl = probs.copy()
            gl[label] -= 1.0
            return (gl * g,)

        tape.record(loss, (logits,), bwd)
    return loss


# ---------------------------------------------------------------------------
# Numerical differentiation (test oracle, also behind the gradcheck CLI)
# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[Tensor], float], x: Tensor, h: float = 1e-5) -> Tensor:
    """Per-element central difference (f(x+h*e) - f(x-h*e)) / 2h.

    ``f`` must be deterministic. ``x.data`` is perturbed in place and
    restored; ``f`` may return a float or a scalar Tensor.
    """
    if h <= 0:
        raise InputError(f"finite difference step must be positive, got {h}")

    def evaluate() -> float:
        v = f(x)
        return v.item() if isinstance(v, Tensor) else float(v)

    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = evaluate()
        flat[i] = orig - h
        down = evaluate()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return Tensor(grad)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """Max elementwise |a-n| / max(|a|, |n|, floor).

    The floor keeps finite-difference noise on near-zero gradient entries
    from registering as spurious relative error.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
