"""Reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray and, when gradients are enabled, remembers the op
that produced it.  ``backward()`` on a scalar loss walks the recorded graph
in reverse topological order.  Training runs in float32; gradient-check
tests build the same graphs in float64.  Every op here is verified against
central finite differences in the test suite.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording (frozen models, constant distillation targets)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    # -- bookkeeping --------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, scalar):
        return mul(self, _wrap(1.0 / float(scalar)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    # -- backward ------------------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and (p._parents or p.requires_grad):
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._backward(node.grad)):
                if pg is None:
                    continue
                if parent.grad is None:
                    parent.grad = pg
                else:
                    parent.grad = parent.grad + pg


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# -- arithmetic ---------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        ga = _unbroadcast(g, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return _node(out, (a, b), backward)


# -- shape ---------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    """Select rows by index; gradients scatter-add back."""
    idx = np.asarray(indices, dtype=np.int64)
    out = a.data[idx]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(out, (a,), backward)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    out = np.stack([t.data for t in tensors])

    def backward(g):
        return tuple(g[i] if t.requires_grad else None for i, t in enumerate(tensors))

    return _node(out, tuple(tensors), backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False),)

    return _node(out, (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        g = np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False)
        return (g / count,)

    return _node(out, (a,), backward)


# -- activations ----------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0), (a,), lambda g: (np.where(mask, g, 0),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), backward)


def grad_reverse(a: Tensor, lam: float = 1.0) -> Tensor:
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    return _node(a.data, (a,), lambda g: (-lam * g,))


# -- structured layers ------------------------------------------------------------

def conv3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1.

    x: (B, C, H, W); weight: (O, C, 3, 3); bias: (O,).
    Realised as nine batched GEMMs over shifted views of the padded input.
    """
    if x.ndim != 4:
        raise ValueError(f"conv3x3 input must be (B, C, H, W), got {x.shape}")
    b_, c, h, w = x.shape
    o, cw = weight.shape[0], weight.shape[1]
    if cw != c:
        raise ValueError(f"conv3x3 weight expects {cw} input channels, input has {c}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    n = h * w
    views = {}
    out = np.zeros((b_, o, n), dtype=x.data.dtype)
    for di in range(3):
        for dj in range(3):
            xs = np.ascontiguousarray(xp[:, :, di : di + h, dj : dj + w]).reshape(b_, c, n)
            views[(di, dj)] = xs
            out += np.matmul(weight.data[:, :, di, dj], xs)
    out = out.reshape(b_, o, h, w) + bias.data[None, :, None, None]

    def backward(g):
        gn = g.reshape(b_, o, n)
        gx = gw = gb = None
        if bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for di in range(3):
                for dj in range(3):
                    gw[:, :, di, dj] = np.tensordot(gn, views[(di, dj)], axes=([0, 2], [0, 2]))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for di in range(3):
                for dj in range(3):
                    gxp[:, :, di : di + h, dj : dj + w] += np.matmul(
                        weight.data[:, :, di, dj].T, gn
                    ).reshape(b_, c, h, w)
            gx = gxp[:, :, 1 : h + 1, 1 : w + 1]
        return gx, gw, gb

    return _node(out, (x, weight, bias), backward)


def avg_pool2x2(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2x2 needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        g4 = (g / 4.0)[:, :, :, None, :, None]
        return (np.broadcast_to(g4, (b, c, h // 2, 2, w // 2, 2)).reshape(b, c, h, w).astype(x.data.dtype, copy=False),)

    return _node(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).astype(x.data.dtype, copy=False),)

    return _node(out, (x,), backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalisation over (B,) or (B, H, W) per feature channel.

    Training mode normalises with biased batch statistics and updates the
    running buffers in place; eval mode uses the running buffers only.
    """
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    shape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu.reshape(shape)) * inv.reshape(shape)
    out = gamma.data.reshape(shape) * x_hat + beta.data.reshape(shape)
    m = x.data.size // x.data.shape[1]

    def backward(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * x_hat).sum(axis=axes)
        if beta.requires_grad:
            gbeta = g.sum(axis=axes)
        if x.requires_grad:
            gi = g * gamma.data.reshape(shape)
            if training:
                mean_gi = gi.mean(axis=axes).reshape(shape)
                mean_gixh = (gi * x_hat).mean(axis=axes).reshape(shape)
                gx = inv.reshape(shape) * (gi - mean_gi - x_hat * mean_gixh)
            else:
                gx = gi * inv.reshape(shape)
            gx = gx.astype(x.data.dtype, copy=False)
        return gx, ggamma, gbeta

    _ = m  # batch element count folded into the means above
    return _node(out, (x, gamma, beta), backward)


# -- losses -----------------------------------------------------------------------

PROB_CLAMP = 1e-7


def bce_loss(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on probabilities, clamped away from {0, 1}."""
    y = np.asarray(targets, dtype=probs.data.dtype)
    if y.shape != probs.data.shape:
        raise ValueError(f"target shape {y.shape} != prediction shape {probs.data.shape}")
    p = np.clip(probs.data, PROB_CLAMP, 1.0 - PROB_CLAMP)
    out = np.asarray(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean())
    inside = (probs.data > PROB_CLAMP) & (probs.data < 1.0 - PROB_CLAMP)
    n = y.size

    def backward(g):
        gp = np.where(inside, (p - y) / (p * (1.0 - p) * n), 0.0).astype(probs.data.dtype)
        return (g * gp,)

    return _node(out, (probs,), backward)


def nll_loss(log_probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer class targets."""
    idx = np.asarray(targets, dtype=np.int64)
    b, k = log_probs.shape
    if idx.shape != (b,):
        raise ValueError(f"targets must have shape ({b},), got {idx.shape}")
    if idx.min() < 0 or idx.max() >= k:
        raise ValueError(f"class index out of range [0, {k})")
    picked = log_probs.data[np.arange(b), idx]
    out = np.asarray(-picked.mean())

    def backward(g):
        gl = np.zeros_like(log_probs.data)
        gl[np.arange(b), idx] = -g / b
        return (gl,)

    return _node(out, (log_probs,), backward)


def l2_norm_rows(x: Tensor) -> Tensor:
    """Euclidean norm of each row of a (B, d) tensor."""
    norms = np.sqrt((x.data**2).sum(axis=1))

    def backward(g):
        safe = np.where(norms > 0, norms, 1.0)
        return ((g / safe)[:, None] * x.data,)

    return _node(norms, (x,), backward)
