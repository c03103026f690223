"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op that touches a tensor requiring gradients records a node (inputs plus
a backward rule).  ``backward`` linearises the recorded graph into a
:class:`Tape` in topological order and replays it in reverse.  The graph is
rebuilt on every forward pass, so rollouts of any length are fine.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError, UsageError

_ids = itertools.count()
_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current thread/context."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.node_id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)

    def backward(self):
        return backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Sequence[Tensor], rule: Callable, op: str) -> Tensor:
    """Wrap ``data``; record a node only if some parent needs gradients."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.node_id = next(_ids)
    out.op = op
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = rule
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, kind: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


# ----------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), rule, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), rule, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), rule, "mul")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def rule(g):
        return (g * mask,)

    return _result(np.where(mask, a.data, 0.0), (a,), rule, "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def rule(g):
        return (g * (1.0 - y * y),)

    return _result(y, (a,), rule, "tanh")


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "relu": relu, "tanh": tanh}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by name: binary kinds add/sub/mul, unary kinds relu/tanh."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ParameterError(f"unknown elementwise kind {kind!r}") from None
    if kind in ("relu", "tanh"):
        if b is not None:
            raise ParameterError(f"{kind} is unary")
        return fn(a)
    if b is None:
        raise ParameterError(f"{kind} needs two operands")
    return fn(a, b)


# ----------------------------------------------------------------------------
# reductions and shape ops


def tsum(a) -> Tensor:
    a = as_tensor(a)

    def rule(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(a.data.sum()), (a,), rule, "sum")


def tmean(a) -> Tensor:
    a = as_tensor(a)
    size = a.data.size

    def rule(g):
        return (np.full(a.shape, g / size),)

    return _result(np.asarray(a.data.mean()), (a,), rule, "mean")


def take(a, index) -> Tensor:
    """Basic (slice/integer) indexing."""
    a = as_tensor(a)

    def rule(g):
        full = np.zeros(a.shape)
        if _is_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _result(a.data[index], (a,), rule, "take")


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def rule(g):
        return (g.reshape(a.shape),)

    return _result(a.data.reshape(shape), (a,), rule, "reshape")


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: no parts")
    ndim = parts[0].ndim
    ax = axis % ndim if ndim else 0
    for p in parts[1:]:
        if p.ndim != ndim or any(
            s != t for i, (s, t) in enumerate(zip(p.shape, parts[0].shape)) if i != ax
        ):
            raise ShapeError(
                f"concat: parts disagree off axis {axis}: {[q.shape for q in parts]}"
            )
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def rule(g):
        return tuple(
            g[(slice(None),) * ax + (slice(lo, hi),)] for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _result(np.concatenate([p.data for p in parts], axis=ax), parts, rule, "concat")


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """``a @ b`` with ``b`` 2-D; ``a`` may carry leading batch dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner extents differ, {a.shape} @ {b.shape}")

    def rule(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(a.data @ b.data, (a, b), rule, "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias``."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def conv1d_causal(x, kernels, dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution.

    ``x`` is (channels_in, time) or (batch, channels_in, time); ``kernels`` is
    (channels_out, channels_in, k).  ``kernels[..., k-1]`` weights the current
    step and ``kernels[..., 0]`` the oldest lag, ``(k-1)*dilation`` steps back.
    Inputs are zero-padded on the left so the output keeps the input length.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if kernels.ndim != 3:
        raise ShapeError(f"conv1d_causal: kernels must be 3-D, got {kernels.shape}")
    c_out, c_in, k = kernels.shape
    if k < 1 or dilation < 1 or int(dilation) != dilation:
        raise ParameterError(f"conv1d_causal: need k >= 1 and dilation >= 1 (k={k}, dilation={dilation})")
    batched = x.ndim == 3
    if x.ndim not in (2, 3) or x.shape[-2] != c_in:
        raise ShapeError(f"conv1d_causal: input {x.shape} incompatible with kernels {kernels.shape}")
    steps = x.shape[-1]
    if steps < 1:
        raise ShapeError("conv1d_causal: empty time axis")
    xd = x.data if batched else x.data[None]
    batch = xd.shape[0]
    pad = (k - 1) * dilation
    xp = np.zeros((batch, c_in, steps + pad))
    xp[:, :, pad:] = xd
    # cols[b, c*k + j, t] = input[b, c, t - (k-1-j)*dilation]
    cols = np.stack([xp[:, :, j * dilation : j * dilation + steps] for j in range(k)], axis=2)
    cols = cols.reshape(batch, c_in * k, steps)
    w2 = kernels.data.reshape(c_out, c_in * k)
    out = np.matmul(w2, cols)

    def rule(g):
        g3 = g if batched else g[None]
        gw = (g3.transpose(1, 0, 2).reshape(c_out, -1) @ cols.transpose(0, 2, 1).reshape(-1, c_in * k))
        gcols = np.matmul(w2.T, g3).reshape(batch, c_in, k, steps)
        gxp = np.zeros(xp.shape)
        for j in range(k):
            gxp[:, :, j * dilation : j * dilation + steps] += gcols[:, :, j]
        gx = gxp[:, :, pad:]
        return (gx if batched else gx[0]), gw.reshape(c_out, c_in, k)

    return _result(out if batched else out[0], (x, kernels), rule, "conv1d_causal")


# ----------------------------------------------------------------------------
# losses


def mse(pred, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    size = diff.size

    def rule(g):
        d = (2.0 * g / size) * diff
        return d, -d

    return _result(np.asarray(np.mean(diff * diff)), (pred, target), rule, "mse")


# ----------------------------------------------------------------------------
# backward


class Tape:
    """Recorded ops reachable from one output, in topological order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in seen:
                continue
            seen.add(node.node_id)
            stack.append((node, True))
            for p in node._parents:
                if p.node_id not in seen:
                    stack.append((p, False))
        return cls(order)

    @property
    def ops(self) -> list[Tensor]:
        return [n for n in self.nodes if n._backward is not None]

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor, tape: Tape | None = None) -> Tape:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor requiring gradients")
    tape = tape or Tape.from_output(loss)
    if tape.nodes[-1] is not loss:
        raise UsageError("loss must be the final node of the tape")
    for node in tape.nodes:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad = parent.grad + g
    return tape
