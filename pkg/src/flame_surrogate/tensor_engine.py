"""Minimal dense N-d array with reverse-mode automatic differentiation.

The graph is dynamic (define-by-run): every operation records its parents
and a backward rule, and :meth:`Tensor.backward` accumulates gradients
into ``requires_grad`` leaves by reverse topological traversal.  Data
lives in numpy buffers (float32 for the training profile, float64 for
gradient checking).  Elementwise broadcasting is restricted to leading
batch dimensions: the smaller operand's shape must equal a trailing
suffix of the larger one's.
"""

from __future__ import annotations

import numpy as np

from .errors import DeterminismError, ParameterError, ShapeError

__all__ = ["Tensor", "concat", "matmul", "gradcheck"]

_ALLOWED_DTYPES = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        arr = arr.astype(np.float64)
    return arr


def _check_dtypes(a: "Tensor", b: "Tensor") -> None:
    if a.data.dtype != b.data.dtype:
        raise TypeError(
            f"mixed dtypes in op: {a.data.dtype} vs {b.data.dtype}; "
            "cast explicitly"
        )


def _check_suffix_broadcast(sa: tuple, sb: tuple) -> None:
    """Allow equal shapes or one shape being a trailing suffix of the other."""
    if sa == sb:
        return
    small, large = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    if len(small) == len(large) or large[len(large) - len(small) :] != small:
        raise ShapeError(f"shapes do not conform: {sa} vs {sb}")


def _reduce_to_shape(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """A node in the autodiff graph wrapping a numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None  # fn(out_grad) -> tuple of parent grads (or None)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:  # dead branch: keep the graph small
            out._parents = ()
            out._backward = None
        return out

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            _check_dtypes(self, other)
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # -- introspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ParameterError(f"item() needs a scalar tensor, got shape {self.shape}")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # -- elementwise arithmetic -------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = self._lift(other)
        _check_suffix_broadcast(self.shape, other.shape)
        a, b = self, other

        def backward(g):
            return _reduce_to_shape(g, a.shape), _reduce_to_shape(g, b.shape)

        return Tensor._from_op(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._lift(other)
        _check_suffix_broadcast(self.shape, other.shape)
        a, b = self, other

        def backward(g):
            return _reduce_to_shape(g, a.shape), _reduce_to_shape(-g, b.shape)

        return Tensor._from_op(a.data - b.data, (a, b), backward)

    def __rsub__(self, other) -> "Tensor":
        return self._lift(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._lift(other)
        _check_suffix_broadcast(self.shape, other.shape)
        a, b = self, other

        def backward(g):
            return (
                _reduce_to_shape(g * b.data, a.shape),
                _reduce_to_shape(g * a.data, b.shape),
            )

        return Tensor._from_op(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = self._lift(other)
        _check_suffix_broadcast(self.shape, other.shape)
        a, b = self, other

        def backward(g):
            return (
                _reduce_to_shape(g / b.data, a.shape),
                _reduce_to_shape(-g * a.data / (b.data * b.data), b.shape),
            )

        return Tensor._from_op(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other) -> "Tensor":
        return self._lift(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        a = self

        def backward(g):
            return (-g,)

        return Tensor._from_op(-a.data, (a,), backward)

    def __pow__(self, exponent) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise ParameterError("power supports scalar exponents only")
        a, p = self, float(exponent)

        def backward(g):
            return (g * p * a.data ** (p - 1.0),)

        return Tensor._from_op(a.data ** p, (a,), backward)

    # -- nonlinearities ----------------------------------------------------------

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        a = self

        def backward(g):
            return (g * out_data,)

        return Tensor._from_op(out_data, (a,), backward)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        a = self

        def backward(g):
            return (g * (1.0 - out_data * out_data),)

        return Tensor._from_op(out_data, (a,), backward)

    def sigmoid(self) -> "Tensor":
        x = self.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)
        a = self

        def backward(g):
            return (g * out_data * (1.0 - out_data),)

        return Tensor._from_op(out_data, (a,), backward)

    def relu(self) -> "Tensor":
        out_data = np.maximum(self.data, 0.0)
        a = self

        def backward(g):
            return (g * (a.data > 0.0),)

        return Tensor._from_op(out_data, (a,), backward)

    def softmax(self) -> "Tensor":
        """Softmax over the last axis (numerically stabilized)."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=-1, keepdims=True)
        a = self

        def backward(g):
            dot = (g * out_data).sum(axis=-1, keepdims=True)
            return (out_data * (g - dot),)

        return Tensor._from_op(out_data, (a,), backward)

    # -- shape manipulation --------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old_shape = a.shape

        def backward(g):
            return (g.reshape(old_shape),)

        return Tensor._from_op(a.data.reshape(shape), (a,), backward)

    def swapaxes(self, ax1: int, ax2: int) -> "Tensor":
        a = self

        def backward(g):
            return (g.swapaxes(ax1, ax2),)

        return Tensor._from_op(a.data.swapaxes(ax1, ax2), (a,), backward)

    def transpose(self) -> "Tensor":
        """Swap the last two axes (matrix transpose for stacked matrices)."""
        return self.swapaxes(-1, -2)

    def __getitem__(self, key) -> "Tensor":
        out_data = self.data[key]
        if out_data.base is not None or np.shares_memory(out_data, self.data):
            out_data = out_data.copy()
        a = self

        def backward(g):
            buf = np.zeros_like(a.data)
            buf[key] += g
            return (buf,)

        return Tensor._from_op(out_data, (a,), backward)

    def take(self, indices, axis: int) -> "Tensor":
        """Gather along ``axis``; duplicate indices accumulate on backward."""
        indices = np.asarray(indices, dtype=np.int64)
        out_data = np.take(self.data, indices, axis=axis)
        a = self

        def backward(g):
            buf = np.zeros_like(a.data)
            key = [slice(None)] * a.data.ndim
            key[axis] = indices
            np.add.at(buf, tuple(key), g)
            return (buf,)

        return Tensor._from_op(out_data, (a,), backward)

    # -- reductions ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            return (_spread(g, a.shape, axis, keepdims),)

        return Tensor._from_op(np.asarray(out_data), (a,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.mean(axis=axis, keepdims=keepdims)
        scale = a.data.size / max(np.asarray(out_data).size, 1)

        def backward(g):
            return (_spread(g, a.shape, axis, keepdims) / scale,)

        return Tensor._from_op(np.asarray(out_data), (a,), backward)

    # -- linear algebra -----------------------------------------------------------------

    def __matmul__(self, other) -> "Tensor":
        other = self._lift(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs >= 2-D operands: {a.shape} vs {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")

        def backward(g):
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            return _reduce_to_shape(ga, a.shape), _reduce_to_shape(gb, b.shape)

        return Tensor._from_op(np.matmul(a.data, b.data), (a, b), backward)

    # -- reverse pass --------------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every ``requires_grad`` leaf.

        ``self`` must be scalar.  Repeated calls without zeroing add up:
        two identical passes leave exactly doubled leaf gradients.
        Intermediate node gradients are kept local to the pass.
        """
        if self.size != 1:
            raise ParameterError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return

        order = _topo_order(self)
        local: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in order:
            g = local.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pid = id(parent)
                if pid in local:
                    local[pid] = local[pid] + pg
                else:
                    local[pid] = pg


def _spread(grad: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    """Broadcast a reduction gradient back to the un-reduced shape."""
    g = np.asarray(grad)
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse topological order via iterative postorder DFS."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))
    order.reverse()
    return order


def concat(tensors, axis: int) -> Tensor:
    """Concatenate tensors along ``axis``."""
    tensors = list(tensors)
    if not tensors:
        raise ParameterError("concat needs at least one tensor")
    dtype = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dtype:
            raise TypeError("mixed dtypes in concat")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        key = [slice(None)] * g.ndim
        outs = []
        for i in range(len(sizes)):
            key[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            outs.append(g[tuple(key)])
        return tuple(outs)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._from_op(data, tuple(tensors), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a @ b


def gradcheck(f, x: Tensor, h: float = 1e-4) -> float:
    """Compare analytic gradients of scalar-valued ``f`` to central differences.

    Returns the max over coordinates of
    ``|analytic - cd| / max(|analytic|, |cd|, 1e-8)``.  ``f`` must be
    deterministic (it is evaluated twice and the results compared
    bitwise) and ``x`` must be float64 for the comparison to be
    meaningful.
    """
    if x.data.dtype != np.dtype(np.float64):
        raise ParameterError("gradcheck requires a float64 tensor")

    def run(data: np.ndarray) -> float:
        y = f(Tensor(data))
        if y.size != 1:
            raise ParameterError("gradcheck requires a scalar-valued function")
        return float(y.data.reshape(()))

    probe = x.data.copy()
    y1, y2 = run(probe), run(probe)
    if np.float64(y1).tobytes() != np.float64(y2).tobytes():
        raise DeterminismError("function is not deterministic between evaluations")

    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise ParameterError("gradcheck requires a scalar-valued function")
    out.backward()
    analytic = (
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    ).reshape(-1)

    flat = x.data.copy().reshape(-1)
    max_err = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = run(flat.reshape(x.shape))
        flat[i] = orig - h
        fm = run(flat.reshape(x.shape))
        flat[i] = orig
        cd = (fp - fm) / (2.0 * h)
        err = abs(analytic[i] - cd) / max(abs(analytic[i]), abs(cd), 1e-8)
        max_err = max(max_err, err)
    return max_err
