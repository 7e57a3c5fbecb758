"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient.  Operations build an
implicit tape: each result keeps references to its parents and a closure that
pushes the output gradient back to them.  ``backward`` walks the tape in
reverse topological order.

Design notes:

* Gradients are accumulated into a transient per-pass buffer and only folded
  into ``.grad`` once the pass is complete, so running ``backward`` twice
  without clearing doubles every gradient (plain additive accumulation).
* A frozen tensor never allocates a gradient and the propagation machinery
  skips it entirely, so freezing is exactly equivalent to detaching.
* Broadcasting support is deliberately narrow: elementwise ops broadcast like
  numpy, matmul requires the documented stacked layout, everything else wants
  exact shapes.  Narrow rules keep every backward rule obviously correct.

The sequential hot loops (LSTM recurrence) are delegated to
:mod:`avasr.autodiff.kernels`, which picks the compiled backend when the
extension is importable and falls back to numpy reference code otherwise.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from avasr.autodiff import kernels
from avasr.errors import NumericError, ShapeError

Array = np.ndarray


class Tensor:
    """An ndarray with an optional gradient and a place on the tape.

    ``requires_grad`` marks leaves the caller wants gradients for; interior
    nodes inherit it from their parents.  ``frozen`` is a hard off-switch used
    for backbone weights: it forces ``requires_grad`` False and the optimizer
    refuses to touch the values.
    """

    __slots__ = ("data", "grad", "requires_grad", "frozen", "name",
                 "_parents", "_bw", "_gtmp")

    def __init__(self, data, requires_grad: bool = False,
                 frozen: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data: Array = arr
        self.grad: Array | None = None
        self.frozen = bool(frozen)
        self.requires_grad = bool(requires_grad) and not self.frozen
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._bw: Callable[[Array], None] | None = None
        self._gtmp: Array | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
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

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        flags = []
        if self.requires_grad:
            flags.append("grad")
        if self.frozen:
            flags.append("frozen")
        suffix = f" [{' '.join(flags)}]" if flags else ""
        return f"<{tag} {self.data.shape} {self.data.dtype}{suffix}>"

    # -- freeze / train switches ----------------------------------------------

    def freeze(self) -> "Tensor":
        self.frozen = True
        self.requires_grad = False
        self.grad = None
        return self

    def unfreeze(self, requires_grad: bool = True) -> "Tensor":
        self.frozen = False
        self.requires_grad = requires_grad
        return self

    def clear_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor)
                   else -float(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), float(other))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _node(data: Array, parents: tuple[Tensor, ...]) -> Tensor:
    """Interior tape node; requires_grad inherited from parents."""
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.frozen = False
    t.requires_grad = any(p.requires_grad for p in parents)
    t.name = None
    t._parents = parents if t.requires_grad else ()
    t._bw = None
    t._gtmp = None
    return t


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast gradient back to the shape of its source."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _accum(t: Tensor, g: Array) -> None:
    """Add a gradient contribution to a parent's per-pass buffer."""
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
    if t._gtmp is None:
        t._gtmp = g.copy()
    else:
        t._gtmp += g


def custom_node(data: Array, parents: Sequence[Tensor],
                backward: Callable[[Array], None]) -> Tensor:
    """Create a tape node for an op defined outside this module.

    ``backward`` receives the output gradient and must call
    ``accumulate_grad`` on each parent it wants to update.
    """
    out = _node(np.asarray(data), tuple(parents))
    if out.requires_grad:
        out._bw = backward
    return out


# exported for modules that define their own differentiable nodes
accumulate_grad = _accum


def backward(loss: Tensor) -> None:
    """Reverse accumulation from a scalar loss over the implicit tape.

    Gradients land in ``.grad`` of every reachable tensor with
    ``requires_grad``; repeated calls without clearing add up.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError(
            f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss._gtmp = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._bw is not None and node._gtmp is not None:
            node._bw(node._gtmp)
    for node in topo:
        if node._gtmp is None:
            continue
        if node.grad is None:
            node.grad = node._gtmp
        else:
            node.grad += node._gtmp
        node._gtmp = None


def clear_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives
# ---------------------------------------------------------------------------

def _want_tensor(x, op: str) -> Tensor:
    if not isinstance(x, Tensor):
        raise TypeError(f"{op}: expected Tensor, got {type(x).__name__}")
    return x


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; numpy broadcasting; scalars allowed on either side."""
    _want_tensor(a, "add")
    if isinstance(b, Tensor):
        try:
            data = a.data + b.data
        except ValueError:
            raise ShapeError(
                f"add: shapes {a.shape} and {b.shape} do not broadcast")
        out = _node(data, (a, b))
        if out.requires_grad:
            def bw(g: Array) -> None:
                _accum(a, g)
                _accum(b, g)
            out._bw = bw
        return out
    c = float(b)
    out = _node(a.data + c, (a,))
    if out.requires_grad:
        out._bw = lambda g: _accum(a, g)
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; numpy broadcasting; scalars allowed."""
    _want_tensor(a, "mul")
    if isinstance(b, Tensor):
        try:
            data = a.data * b.data
        except ValueError:
            raise ShapeError(
                f"mul: shapes {a.shape} and {b.shape} do not broadcast")
        out = _node(data, (a, b))
        if out.requires_grad:
            def bw(g: Array) -> None:
                _accum(a, g * b.data)
                _accum(b, g * a.data)
            out._bw = bw
        return out
    c = float(b)
    out = _node(a.data * c, (a,))
    if out.requires_grad:
        out._bw = lambda g: _accum(a, g * c)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Stacked matrix product.

    Contraction rule: ``a`` is (..., m, k); ``b`` is either (k, n), applied to
    every leading slice of ``a``, or (..., k, n) with leading dims equal to
    ``a``'s.  No other broadcasting.
    """
    _want_tensor(a, "matmul")
    _want_tensor(b, "matmul")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul: operands must have ndim >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dims disagree ({a.shape[-1]} vs {b.shape[-2]}) "
            f"for {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(
            f"matmul: leading dims must match exactly, got {a.shape} @ {b.shape}")
    data = a.data @ b.data
    out = _node(data, (a, b))
    if out.requires_grad:
        def bw(g: Array) -> None:
            if a.requires_grad:
                _accum(a, g @ np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    k, n = b.shape
                    a2 = a.data.reshape(-1, k)
                    g2 = g.reshape(-1, n)
                    _accum(b, a2.T @ g2)
                else:
                    _accum(b, np.swapaxes(a.data, -1, -2) @ g)
        out._bw = bw
    return out


def relu(x: Tensor) -> Tensor:
    _want_tensor(x, "relu")
    out = _node(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        mask = x.data > 0
        out._bw = lambda g: _accum(x, g * mask)
    return out


def tanh(x: Tensor) -> Tensor:
    _want_tensor(x, "tanh")
    y = np.tanh(x.data)
    out = _node(y, (x,))
    if out.requires_grad:
        out._bw = lambda g: _accum(x, g * (1.0 - y * y))
    return out


def sigmoid(x: Tensor) -> Tensor:
    _want_tensor(x, "sigmoid")
    y = _sigmoid_stable(x.data)
    out = _node(y, (x,))
    if out.requires_grad:
        out._bw = lambda g: _accum(x, g * y * (1.0 - y))
    return out


def _sigmoid_stable(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    _want_tensor(x, "softmax")
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _node(y, (x,))
    if out.requires_grad:
        def bw(g: Array) -> None:
            inner = (g * y).sum(axis=-1, keepdims=True)
            _accum(x, y * (g - inner))
        out._bw = bw
    return out


def log_softmax(x: Tensor) -> Tensor:
    """Log-softmax over the last axis."""
    _want_tensor(x, "log_softmax")
    m = x.data.max(axis=-1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    out = _node(y, (x,))
    if out.requires_grad:
        def bw(g: Array) -> None:
            _accum(x, g - np.exp(y) * g.sum(axis=-1, keepdims=True))
        out._bw = bw
    return out


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    _want_tensor(x, "logsumexp")
    m = x.data.max(axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x.data - m_safe)
    s = e.sum(axis=axis, keepdims=True)
    red = m_safe + np.log(s)
    red = np.where(np.isfinite(m), red, m)  # all -inf rows stay -inf
    data = red if keepdims else np.squeeze(red, axis=axis)
    out = _node(data, (x,))
    if out.requires_grad:
        def bw(g: Array) -> None:
            gk = g if keepdims else np.expand_dims(g, axis)
            _accum(x, gk * (e / s))
        out._bw = bw
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Per-position normalization over the last axis with scale and shift."""
    _want_tensor(x, "layer_norm")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must be ({d},), got {gain.shape} "
            f"and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _node(xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:
        def bw(g: Array) -> None:
            if gain.requires_grad:
                _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                _accum(bias, g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gg = g * gain.data
                m1 = gg.mean(axis=-1, keepdims=True)
                m2 = (gg * xhat).mean(axis=-1, keepdims=True)
                _accum(x, (gg - m1 - xhat * m2) * inv)
        out._bw = bw
    return out


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, pad: tuple[int, int] = (0, 0)) -> Tensor:
    """1-d convolution along axis 0.

    x: (T, C_in); w: (k, C_in, C_out); optional bias (C_out,).
    Output length L = floor((T + pad_left + pad_right - k) / stride) + 1.
    """
    _want_tensor(x, "conv1d")
    _want_tensor(w, "conv1d")
    if x.ndim != 2 or w.ndim != 3:
        raise ShapeError(
            f"conv1d: need x (T, C_in) and w (k, C_in, C_out), "
            f"got {x.shape} and {w.shape}")
    k, cin, cout = w.shape
    if x.shape[1] != cin:
        raise ShapeError(
            f"conv1d: channel mismatch, x has {x.shape[1]}, w expects {cin}")
    pl, pr = pad
    xp = np.pad(x.data, ((pl, pr), (0, 0))) if (pl or pr) else x.data
    tpad = xp.shape[0]
    if tpad < k:
        raise ShapeError(
            f"conv1d: padded length {tpad} shorter than kernel {k}")
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)[::stride]
    data = np.tensordot(win, w.data, axes=([2, 1], [0, 1]))
    if b is not None:
        if b.shape != (cout,):
            raise ShapeError(f"conv1d: bias must be ({cout},), got {b.shape}")
        data = data + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _node(data, parents)
    if out.requires_grad:
        L = data.shape[0]

        def bw(g: Array) -> None:
            if w.requires_grad:
                _accum(w, np.einsum("tcj,td->jcd", win, g))
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=0))
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for j in range(k):
                    idx = j + stride * np.arange(L)
                    np.add.at(dxp, idx, g @ w.data[j].T)
                _accum(x, dxp[pl:tpad - pr] if (pl or pr) else dxp)
        out._bw = bw
    return out


def depthwise_conv1d(x: Tensor, w: Tensor, b: Tensor | None = None,
                     pad: tuple[int, int] = (0, 0)) -> Tensor:
    """Per-channel 1-d convolution along axis 0, stride 1.

    x: (T, C); w: (k, C); optional bias (C,).
    """
    _want_tensor(x, "depthwise_conv1d")
    _want_tensor(w, "depthwise_conv1d")
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"depthwise_conv1d: need x (T, C) and w (k, C), "
            f"got {x.shape} and {w.shape}")
    k, c = w.shape
    pl, pr = pad
    xp = np.pad(x.data, ((pl, pr), (0, 0))) if (pl or pr) else x.data
    tpad = xp.shape[0]
    if tpad < k:
        raise ShapeError(
            f"depthwise_conv1d: padded length {tpad} shorter than kernel {k}")
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)
    data = np.einsum("tcj,jc->tc", win, w.data)
    if b is not None:
        if b.shape != (c,):
            raise ShapeError(
                f"depthwise_conv1d: bias must be ({c},), got {b.shape}")
        data = data + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _node(data, parents)
    if out.requires_grad:
        L = data.shape[0]

        def bw(g: Array) -> None:
            if w.requires_grad:
                _accum(w, np.einsum("tcj,tc->jc", win, g))
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=0))
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for j in range(k):
                    dxp[j:j + L] += g * w.data[j]
                _accum(x, dxp[pl:tpad - pr] if (pl or pr) else dxp)
        out._bw = bw
    return out


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty input list")
    for t in tensors:
        _want_tensor(t, "concat")
    ref = tensors[0].shape
    for t in tensors[1:]:
        a, b = list(ref), list(t.shape)
        a[axis] = b[axis] = -1
        if a != b:
            raise ShapeError(
                f"concat: shapes {ref} and {t.shape} disagree off axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _node(data, tuple(tensors))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def bw(g: Array) -> None:
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                _accum(t, piece)
        out._bw = bw
    return out


def slice_(x: Tensor, key) -> Tensor:
    """Basic slicing (slices and ints); gradient scatters back into place."""
    _want_tensor(x, "slice")
    data = x.data[key]
    out = _node(np.ascontiguousarray(data), (x,))
    if out.requires_grad:
        def bw(g: Array) -> None:
            dx = np.zeros_like(x.data)
            dx[key] = g
            _accum(x, dx)
        out._bw = bw
    return out


def gather_rows(table: Tensor, ids: Array) -> Tensor:
    """Row lookup (embedding): table (R, E), ids int (n,) -> (n, E)."""
    _want_tensor(table, "gather_rows")
    ids = np.asarray(ids)
    if table.ndim != 2 or ids.ndim != 1:
        raise ShapeError(
            f"gather_rows: need table (R, E) and ids (n,), "
            f"got {table.shape} and {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"gather_rows: id out of range [0, {table.shape[0]}): "
            f"min {ids.min()}, max {ids.max()}")
    out = _node(table.data[ids], (table,))
    if out.requires_grad:
        def bw(g: Array) -> None:
            dt = np.zeros_like(table.data)
            np.add.at(dt, ids, g)
            _accum(table, dt)
        out._bw = bw
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    _want_tensor(x, "reshape")
    data = x.data.reshape(shape)
    out = _node(data, (x,))
    if out.requires_grad:
        out._bw = lambda g: _accum(x, g.reshape(x.data.shape))
    return out


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    _want_tensor(x, "swapaxes")
    out = _node(np.ascontiguousarray(np.swapaxes(x.data, a1, a2)), (x,))
    if out.requires_grad:
        out._bw = lambda g: _accum(x, np.swapaxes(g, a1, a2))
    return out


def mean_all(x: Tensor) -> Tensor:
    """Reduce to a scalar by arithmetic mean over all entries."""
    _want_tensor(x, "mean_all")
    out = _node(np.asarray(x.data.mean()), (x,))
    if out.requires_grad:
        n = x.data.size

        def bw(g: Array) -> None:
            _accum(x, np.full_like(x.data, float(g) / n))
        out._bw = bw
    return out


def sum_all(x: Tensor) -> Tensor:
    _want_tensor(x, "sum_all")
    out = _node(np.asarray(x.data.sum()), (x,))
    if out.requires_grad:
        out._bw = lambda g: _accum(x, np.full_like(x.data, float(g)))
    return out


def stack_scalars(scalars: Sequence[Tensor]) -> Tensor:
    """Stack 0-d tensors into a vector (for batch-mean losses)."""
    for s in scalars:
        _want_tensor(s, "stack_scalars")
        if s.data.ndim != 0:
            raise ShapeError(
                f"stack_scalars: expected scalars, got shape {s.data.shape}")
    data = np.array([s.data for s in scalars])
    out = _node(data, tuple(scalars))
    if out.requires_grad:
        def bw(g: Array) -> None:
            for i, s in enumerate(scalars):
                _accum(s, np.asarray(g[i]))
        out._bw = bw
    return out


# ---------------------------------------------------------------------------
# LSTM sequence op (recurrence runs in the kernel backend)
# ---------------------------------------------------------------------------

def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Single-layer LSTM over a sequence, zero initial state.

    x: (T, E_in); wx: (E_in, 4E); wh: (E, 4E); b: (4E,).  Returns hidden
    states (T, E).  Gate layout along the 4E axis is [input, forget, cell,
    output].  The input projection is one big matmul; the time loop runs in
    the selected kernel backend.
    """
    for t, nm in ((x, "x"), (wx, "wx"), (wh, "wh"), (b, "b")):
        _want_tensor(t, "lstm")
    e4 = wx.shape[1]
    if e4 % 4 != 0:
        raise ShapeError(f"lstm: gate axis {e4} not divisible by 4")
    e = e4 // 4
    if wh.shape != (e, e4) or b.shape != (e4,) or x.shape[1] != wx.shape[0]:
        raise ShapeError(
            f"lstm: inconsistent shapes x{x.shape} wx{wx.shape} "
            f"wh{wh.shape} b{b.shape}")
    xw = x.data @ wx.data + b.data
    h_seq, gates, c_all = kernels.lstm_forward(xw, wh.data)
    out = _node(h_seq, (x, wx, wh, b))
    if out.requires_grad:
        def bw(g: Array) -> None:
            dpre = kernels.lstm_backward(
                wh.data, gates, c_all, np.ascontiguousarray(g))
            if b.requires_grad:
                _accum(b, dpre.sum(axis=0))
            if wx.requires_grad:
                _accum(wx, x.data.T @ dpre)
            if x.requires_grad:
                _accum(x, dpre @ wx.data.T)
            if wh.requires_grad:
                hprev = np.vstack([np.zeros((1, e), dtype=h_seq.dtype),
                                   h_seq[:-1]])
                _accum(wh, hprev.T @ dpre)
        out._bw = bw
    return out


# ---------------------------------------------------------------------------
# uniform entry point with validation
# ---------------------------------------------------------------------------

_PRIMITIVES: dict[str, Callable] = {}


def _register(name: str, fn: Callable, arity) -> None:
    _PRIMITIVES[name] = (fn, arity)


_register("matmul", matmul, 2)
_register("add", add, 2)
_register("elementwise-mul", mul, 2)
_register("relu", relu, 1)
_register("tanh", tanh, 1)
_register("sigmoid", sigmoid, 1)
_register("softmax-over-last-axis", softmax, 1)
_register("log-softmax", log_softmax, 1)
_register("layer-norm", layer_norm, 3)
_register("1d-convolution", conv1d, (2, 3))
_register("concatenate", lambda *ts, axis=0: concat(ts, axis=axis), None)
_register("slice", slice_, 1)
_register("logsumexp", logsumexp, 1)
_register("scalar-reduce-mean", mean_all, 1)


def primitive_forward(kind: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    """Apply a named primitive with input validation.

    Rejects unknown kinds, wrong arity, and non-finite inputs.  Shape rules
    are enforced by the underlying op and reported with the offending
    dimensions named.
    """
    if kind not in _PRIMITIVES:
        raise NumericError(
            f"unknown primitive kind {kind!r}; known: {sorted(_PRIMITIVES)}")
    fn, arity = _PRIMITIVES[kind]
    tensor_inputs = [t for t in inputs if isinstance(t, Tensor)]
    if not tensor_inputs:
        raise NumericError(f"{kind}: no tensor inputs given")
    for i, t in enumerate(tensor_inputs):
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"{kind}: input {i} contains non-finite values")
    if arity is not None:
        allowed = arity if isinstance(arity, tuple) else (arity,)
        if len(inputs) not in allowed:
            raise NumericError(
                f"{kind}: expected {allowed} inputs, got {len(inputs)}")
    if kind == "concatenate":
        return fn(*inputs, **kwargs)
    return fn(*inputs, **kwargs)
