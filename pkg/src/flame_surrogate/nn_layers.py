"""Neural-network building blocks on top of the autodiff tensor engine.

Layout convention: sequence tensors are channels-last, ``[batch, length,
channels]``, so per-channel parameters (shape ``[channels]``) combine with
activations under the engine's trailing-suffix broadcast rule.  All
parameters are initialized from a caller-supplied ``numpy.random.Generator``
with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) bounds.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .tensor_engine import Tensor, concat

__all__ = [
    "Module",
    "Linear",
    "Conv1d",
    "BatchNorm1d",
    "LayerNorm",
    "LSTMLayer",
    "MultiHeadAttention",
    "Dropout",
    "avg_pool1d",
    "positional_encoding",
]


class Module:
    """Base class giving composite modules parameter/buffer dictionaries.

    Child modules are discovered from instance attributes (single modules
    or lists of modules); keys are dotted paths like ``"cfp_convs.0.weight"``.
    """

    def __init__(self):
        self.training = True

    def _items(self):
        for name, value in vars(self).items():
            if name == "training":
                continue
            yield name, value

    def parameters(self) -> dict[str, Tensor]:
        # frozen parameters stay listed; training code consults requires_grad
        out: dict[str, Tensor] = {}
        for name, value in self._items():
            if isinstance(value, Tensor):
                out[name] = value
            elif isinstance(value, Module):
                for key, p in value.parameters().items():
                    out[f"{name}.{key}"] = p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for key, p in item.parameters().items():
                            out[f"{name}.{i}.{key}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, value in self._items():
            if isinstance(value, Module):
                for key, b in value.buffers().items():
                    out[f"{name}.{key}"] = b
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for key, b in item.buffers().items():
                            out[f"{name}.{i}.{key}"] = b
        out.update(self._local_buffers())
        return out

    def _local_buffers(self) -> dict[str, np.ndarray]:
        return {}

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data for k, v in self.parameters().items()}
        state.update(self.buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ParameterError(
                f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}"
            )
        for key, target in own.items():
            src = np.asarray(state[key])
            if src.shape != target.shape:
                raise ShapeError(
                    f"state entry {key!r}: shape {src.shape} != {target.shape}"
                )
            target[...] = src.astype(target.dtype)

    def set_training(self, flag: bool) -> None:
        self.training = bool(flag)
        for _, value in self._items():
            if isinstance(value, Module):
                value.set_training(flag)
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        item.set_training(flag)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None


def _uniform(rng: np.random.Generator, bound: float, shape, dtype) -> Tensor:
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


class Linear(Module):
    """Affine map ``y = x @ W + b`` over the last axis."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, bias: bool = True,
                 dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        k = 1.0 / np.sqrt(in_features)
        self.weight = _uniform(rng, k, (in_features, out_features), dtype)
        self.bias = _uniform(rng, k, (out_features,), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv1d(Module):
    """1-D convolution, stride 1, zero padding ``(k - 1) // 2`` (same length).

    Input/output are channels-last ``[B, L, C]``.  The convolution is
    expressed as ``k`` shifted slice-matmul terms so it rides entirely on
    engine primitives.
    """

    def __init__(self, in_channels: int, out_channels: int,
                 rng: np.random.Generator, kernel_size: int = 3,
                 dtype=np.float32):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ParameterError("kernel_size must be odd for same-length output")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        k = 1.0 / np.sqrt(in_channels * kernel_size)
        self.weight = _uniform(rng, k, (kernel_size, in_channels, out_channels), dtype)
        self.bias = _uniform(rng, k, (out_channels,), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(
                f"conv1d expects [B, L, {self.in_channels}], got {x.shape}"
            )
        b, length, _ = x.shape
        pad = (self.kernel_size - 1) // 2
        zeros = Tensor(np.zeros((b, pad, self.in_channels), dtype=x.dtype))
        xp = concat([zeros, x, zeros], axis=1)
        y = xp[:, 0:length, :] @ self.weight[0]
        for j in range(1, self.kernel_size):
            y = y + xp[:, j:j + length, :] @ self.weight[j]
        return y + self.bias


def avg_pool1d(x: Tensor, kernel_size: int = 2, stride: int = 2) -> Tensor:
    """Average pooling along the length axis of ``[B, L, C]``.

    Output length is ``(L - kernel_size) // stride + 1``; with the default
    2/2 configuration an odd trailing sample is dropped.
    """
    if x.ndim != 3:
        raise ShapeError(f"avg_pool1d expects [B, L, C], got {x.shape}")
    length = x.shape[1]
    out_len = (length - kernel_size) // stride + 1
    if out_len < 1:
        raise ShapeError(f"pool window {kernel_size} exceeds length {length}")
    acc = x[:, 0:(out_len - 1) * stride + 1:stride, :]
    for j in range(1, kernel_size):
        acc = acc + x[:, j:j + (out_len - 1) * stride + 1:stride, :]
    return acc * (1.0 / kernel_size)


class BatchNorm1d(Module):
    """Batch normalization over ``[B, C]`` or ``[B, L, C]`` (channels last).

    Training mode normalizes with batch statistics (all axes but the last)
    and updates running estimates with ``momentum``; the running variance
    uses the unbiased estimator.  Eval mode applies the running estimates.
    """

    def __init__(self, num_features: int, eps: float = 1e-5,
                 momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        self.num_features = num_features
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Tensor(np.ones(num_features, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)

    def _local_buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim not in (2, 3) or x.shape[-1] != self.num_features:
            raise ShapeError(
                f"batchnorm expects [..., {self.num_features}], got {x.shape}"
            )
        reduce_axes = tuple(range(x.ndim - 1))
        if self.training:
            count = int(np.prod([x.shape[a] for a in reduce_axes]))
            if count < 2:
                raise DataError(
                    f"batchnorm in training mode needs >= 2 samples, got {count}"
                )
            mean = x.mean(axis=reduce_axes)
            centered = x - mean
            var = (centered * centered).mean(axis=reduce_axes)
            y = centered / ((var + self.eps) ** 0.5)
            m = self.momentum
            unbiased = var.data * (count / (count - 1))
            self.running_mean[...] = (1 - m) * self.running_mean + m * mean.data
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
        else:
            mean = Tensor(self.running_mean)
            std = Tensor(np.sqrt(self.running_var + self.eps))
            y = (x - mean) / std
        return y * self.gamma + self.beta


class LayerNorm(Module):
    """Normalization over the last axis with learned scale and shift.

    The per-position statistics are re-expanded along the feature axis via
    a rank-1 matmul so the data path stays within the engine's
    trailing-suffix broadcast rule.
    """

    def __init__(self, num_features: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.num_features = num_features
        self.eps = float(eps)
        self.gamma = Tensor(np.ones(num_features, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.num_features:
            raise ShapeError(
                f"layernorm expects [..., {self.num_features}], got {x.shape}"
            )
        ones_row = Tensor(np.ones((1, self.num_features), dtype=x.dtype))

        def expand(stat: Tensor) -> Tensor:
            return stat.reshape(*stat.shape, 1) @ ones_row

        mean = x.mean(axis=-1)
        centered = x - expand(mean)
        var = (centered * centered).mean(axis=-1)
        inv_std = (var + self.eps) ** -0.5
        return centered * expand(inv_std) * self.gamma + self.beta


class LSTMLayer(Module):
    """Single LSTM layer over ``[B, T, input_size]`` sequences.

    Gate stack order is input/forget/cell/output.  Two bias vectors
    (input-side and hidden-side) are kept separate per the common
    recurrent-layer convention; both count toward the parameter budget.
    """

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        k = 1.0 / np.sqrt(hidden_size)
        self.weight_ih = _uniform(rng, k, (input_size, 4 * hidden_size), dtype)
        self.weight_hh = _uniform(rng, k, (hidden_size, 4 * hidden_size), dtype)
        self.bias_ih = _uniform(rng, k, (4 * hidden_size,), dtype)
        self.bias_hh = _uniform(rng, k, (4 * hidden_size,), dtype)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (all hidden states ``[B, T, H]``, final hidden ``[B, H]``)."""
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(
                f"lstm expects [B, T, {self.input_size}], got {x.shape}"
            )
        b, steps, _ = x.shape
        hs = self.hidden_size
        h = Tensor(np.zeros((b, hs), dtype=x.dtype))
        c = Tensor(np.zeros((b, hs), dtype=x.dtype))
        outputs = []
        bias = self.bias_ih + self.bias_hh
        for t in range(steps):
            z = x[:, t, :] @ self.weight_ih + h @ self.weight_hh + bias
            gate_i = z[:, 0 * hs:1 * hs].sigmoid()
            gate_f = z[:, 1 * hs:2 * hs].sigmoid()
            gate_g = z[:, 2 * hs:3 * hs].tanh()
            gate_o = z[:, 3 * hs:4 * hs].sigmoid()
            c = gate_f * c + gate_i * gate_g
            h = gate_o * c.tanh()
            outputs.append(h.reshape(b, 1, hs))
        return concat(outputs, axis=1), h


class MultiHeadAttention(Module):
    """Scaled dot-product attention with learned Q/K/V/output projections."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        if d_model % n_heads != 0:
            raise ParameterError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.proj_q = Linear(d_model, d_model, rng, dtype=dtype)
        self.proj_k = Linear(d_model, d_model, rng, dtype=dtype)
        self.proj_v = Linear(d_model, d_model, rng, dtype=dtype)
        self.proj_out = Linear(d_model, d_model, rng, dtype=dtype)

    def _split(self, t: Tensor) -> Tensor:
        b, length, _ = t.shape
        return t.reshape(b, length, self.n_heads, self.d_head).swapaxes(1, 2)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        if query.shape[-1] != self.d_model or key.shape[-1] != self.d_model:
            raise ShapeError(
                f"attention expects feature dim {self.d_model}, "
                f"got q={query.shape} k={key.shape}"
            )
        if key.shape[1] != value.shape[1]:
            raise ShapeError(
                f"key/value lengths differ: {key.shape} vs {value.shape}"
            )
        b, len_q, _ = query.shape
        q = self._split(self.proj_q(query))
        k = self._split(self.proj_k(key))
        v = self._split(self.proj_v(value))
        scores = (q @ k.transpose()) * (1.0 / np.sqrt(self.d_head))
        attn = scores.softmax()
        mixed = attn @ v
        merged = mixed.swapaxes(1, 2).reshape(b, len_q, self.d_model)
        return self.proj_out(merged)


class Dropout(Module):
    """Inverted dropout: active only in training mode, identity in eval.

    Masks are drawn from the generator handed in at construction so a
    seeded model stays bit-reproducible.
    """

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)
        self._rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (self._rng.random(x.shape) < keep).astype(x.dtype.type) / keep
        return x * Tensor(mask)


def positional_encoding(length: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal position table ``[length, d_model]``.

    Even columns carry ``sin(pos / 10000^(2i/d))``, odd columns the matching
    cosine.
    """
    position = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(-np.log(10000.0) * np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    table = np.zeros((length, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(position * div)
    table[:, 1::2] = np.cos(position * div[: d_model // 2])
    return table.astype(dtype)
