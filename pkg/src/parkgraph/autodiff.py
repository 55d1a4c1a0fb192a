"""Reverse-mode differentiation over small dense float64 arrays.

Every operation on :class:`Tensor` records its parents and a local
backward rule.  :func:`backward` walks the recorded graph in reverse
topological order and accumulates gradients into the leaves that
require them.  A recorded graph belongs to the thread that built it.
"""

from __future__ import annotations

import contextlib
import contextvars
import functools
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse

MAX_RANK = 3

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


class ShapeError(ValueError):
    """An operation received operands whose shapes it cannot combine."""


class NonFiniteError(FloatingPointError):
    """A forward pass produced NaN or infinity."""


@contextlib.contextmanager
def no_grad():
    """Disable graph recording in the current context (thread / task)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    # make `ndarray @ Tensor` and friends dispatch to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None, op: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"tensor rank {arr.ndim} exceeds the supported maximum of {MAX_RANK}")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite value produced by {op or 'input'} (shape {arr.shape})")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # -- operators ------------------------------------------------------------

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

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def abs(self):
        return tabs(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    needs = grad_enabled() and any(p.requires_grad for p in parents)
    if needs:
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def tabs(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


# -- reductions and shape ---------------------------------------------------


def tsum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def back(g):
        g = np.asarray(g)
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), back, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), 1.0 / float(count))


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _result(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int)) or i is Ellipsis or i is None for i in items)


def getitem(x: Tensor, index) -> Tensor:
    basic = _is_basic(index)

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(x.data[index], (x,), back, "getitem")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tensors, back, "concat")


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul operands must have rank >= 1")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

    def back(g):
        ad, bd = a.data, b.data
        # promote vectors to matrices the way np.matmul does
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
        gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
        if ad.ndim == 1:
            ga = ga[..., 0, :]
        if bd.ndim == 1:
            gb = gb[..., :, 0]
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), back, "matmul")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int) -> Tensor:
    """Valid (unpadded) strided 1-D cross-correlation.

    ``x`` is ``(B, C_in, L)``, ``weight`` is ``(F, C_in, k)``; the result is
    ``(B, F, L_out)`` with ``L_out = (L - k) // stride + 1``.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects (B, C, L) input and (F, C, k) weight, got {x.shape} and {weight.shape}")
    batch, c_in, length = x.shape
    n_filters, w_c, k = weight.shape
    if w_c != c_in:
        raise ShapeError(f"conv1d weight expects {w_c} input channels, input has {c_in}")
    if length < k:
        raise ShapeError(f"conv1d input length {length} is shorter than filter size {k}")
    if stride < 1:
        raise ShapeError(f"conv1d stride must be >= 1, got {stride}")
    l_out = (length - k) // stride + 1
    # (B, C, L_out, k)
    cols = sliding_window_view(x.data, k, axis=2)[:, :, ::stride]
    cols_mat = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(batch, l_out, c_in * k)
    w_mat = weight.data.reshape(n_filters, c_in * k)
    out = np.matmul(cols_mat, w_mat.T).transpose(0, 2, 1)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data[None, :, None]
        parents.append(bias)

    def back(g):
        g_t = g.transpose(0, 2, 1)  # (B, L_out, F)
        gw = np.tensordot(g_t, cols_mat, axes=([0, 1], [0, 1])).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(g_t, w_mat).reshape(batch, l_out, c_in, k)
            gx = _col2im(gcols, length, stride)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    return _result(np.ascontiguousarray(out), parents, back, "conv1d")


@functools.lru_cache(maxsize=64)
def _scatter_matrix(l_out: int, k: int, stride: int, length: int) -> sparse.csr_matrix:
    rows = np.arange(l_out * k)
    cols = (stride * np.arange(l_out)[:, None] + np.arange(k)[None, :]).ravel()
    return sparse.csr_matrix((np.ones(l_out * k), (rows, cols)), shape=(l_out * k, length))


def _col2im(gcols: np.ndarray, length: int, stride: int) -> np.ndarray:
    """Scatter-add ``(B, L_out, C, k)`` column gradients back onto ``(B, C, L)``."""
    batch, l_out, c_in, k = gcols.shape
    if k <= 16:
        gx = np.zeros((batch, c_in, length))
        span = stride * (l_out - 1) + 1
        for j in range(k):
            gx[:, :, j : j + span : stride] += gcols[:, :, :, j].transpose(0, 2, 1)
        return gx
    flat = np.ascontiguousarray(gcols.transpose(0, 2, 1, 3)).reshape(batch * c_in, l_out * k)
    gx = sparse.csr_matrix.__rmatmul__(_scatter_matrix(l_out, k, stride, length), flat)
    return np.asarray(gx).reshape(batch, c_in, length)


def max_pool1d(x: Tensor, size: int, stride: int) -> Tensor:
    """Max pooling over the last axis of a ``(B, C, L)`` tensor; ties go to the first index."""
    if x.ndim != 3:
        raise ShapeError(f"max_pool1d expects (B, C, L), got {x.shape}")
    length = x.shape[2]
    if length < size:
        raise ShapeError(f"max_pool1d input length {length} is shorter than pool size {size}")
    windows = sliding_window_view(x.data, size, axis=2)[:, :, ::stride]
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    l_out = out.shape[2]
    src = arg + stride * np.arange(l_out)[None, None, :]

    def back(g):
        gx = np.zeros_like(x.data)
        b_idx, c_idx, _ = np.indices(src.shape)
        np.add.at(gx, (b_idx, c_idx, src), g)
        return (gx,)

    return _result(out, (x,), back, "max_pool1d")


# -- backward ---------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, wrt: Iterable[Tensor] = ()) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Leaves listed in ``wrt`` that the loss does not depend on receive a zero
    gradient so that callers always find a populated slot.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    for leaf in wrt:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
