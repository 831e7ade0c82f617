"""Minimal reverse-mode differentiation over float64 numpy arrays.

Only the operators the graph/recurrent model needs are provided. Each op
builds a node holding its parents and a closure that maps the output
gradient to parent gradients.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from ..errors import NaNGradient

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad: np.ndarray | None = None, check_finite: bool = True) -> None:
        if grad is None:
            grad = np.ones_like(self.data)
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = grads[key] + pg if key in grads else pg
        if check_finite:
            for node in order:
                if node._backward is None and node.grad is not None and not np.all(np.isfinite(node.grad)):
                    raise NaNGradient(f"non-finite gradient for {node.name or node.shape}")

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(a.data + b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(a.data - b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(a.data * b.data, (a, b),
                        lambda g: (_unbroadcast(g * b.data, a.shape),
                                   _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return Tensor._make(out, (a, b),
                        lambda g: (_unbroadcast(g / b.data, a.shape),
                                   _unbroadcast(-g * out / b.data, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 and b.ndim == 2:
        # row vector times matrix
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), (b.shape[1],))
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D (or vector @ matrix)")

    if b.ndim == 2 and a.ndim > 2:
        # weight applied to a batch: fold leading axes into one GEMM
        k = a.shape[-1]
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[1],))

        def back2(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a.data.reshape(-1, k).T @ g2 if b.requires_grad else None
            return ga, gb

        return Tensor._make(out, (a, b), back2)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return Tensor._make(np.matmul(a.data, b.data), (a, b), back)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return Tensor._make(np.ascontiguousarray(np.transpose(a.data, axes)), (a,),
                        lambda g: (np.ascontiguousarray(np.transpose(g, inv)),))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)


def index(a: Tensor, idx) -> Tensor:
    basic = _is_basic(idx)

    def back(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return Tensor._make(a.data[idx], (a,), back)


def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in ts], axis=axis), ts, back)


def stack(ts: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in ts]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.data for t in ts], axis=axis), ts, back)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    pos = x > 0
    ex = np.exp(np.minimum(x, 0.0))
    out = np.where(pos, x, alpha * (ex - 1.0))
    return Tensor._make(out, (a,), lambda g: (np.where(pos, g, g * (alpha * ex)),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    return Tensor._make(np.where(x > 0, x, slope * x), (a,),
                        lambda g: (g * np.where(x > 0, 1.0, slope),))


def masked_softmax(a: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over ``axis`` restricted to entries where ``mask`` is true.

    Masked-out entries get probability exactly 0. Rows with no admissible
    entry are all zero.
    """
    mask = np.asarray(mask, dtype=bool)
    x = np.where(mask, a.data, -np.inf)
    mx = np.max(x, axis=axis, keepdims=True)
    mx[~np.isfinite(mx)] = 0.0
    x -= mx
    np.exp(x, out=x)
    s = x.sum(axis=axis, keepdims=True)
    s[s == 0] = 1.0
    out = x / s

    def back(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), back)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate`` is 0."""
    if not train or rate <= 0.0:
        return a
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = rng.random(a.shape) >= rate
    return mul(a, keep / (1.0 - rate))


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy, computed as max(x,0) - x*y + log(1+exp(-|x|))."""
    x = logits.data
    y = np.asarray(targets, dtype=np.float64).reshape(x.shape)
    loss = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def back(g):
        return (g * (_sigmoid(x) - y) / n,)

    return Tensor._make(np.asarray(loss.mean()), (logits,), back)


def gru_sequence(xp: Tensor, u_zr: Tensor, u_c: Tensor, b_zr: Tensor, b_c: Tensor,
                 reverse: bool = False) -> Tensor:
    """Fused GRU recurrence over pre-projected inputs.

    ``xp`` is ``[T, B, 3H]`` holding the input contributions to the update,
    reset and candidate pre-activations. ``u_zr`` ``[H, 2H]`` and ``u_c``
    ``[H, H]`` are the hidden-state blocks of the gate matrices. Returns all
    hidden states ``[T, B, H]`` in time order; with ``reverse`` the
    recurrence runs from the last step to the first.
    """
    X, Uzr, Uc, bzr, bc = xp.data, u_zr.data, u_c.data, b_zr.data, b_c.data
    T, B, _ = X.shape
    H = Uc.shape[0]
    steps = list(range(T - 1, -1, -1)) if reverse else list(range(T))
    hs = np.zeros((T, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    cs = np.empty((T, B, H))
    prev = np.zeros((B, H))
    prevs = np.empty((T, B, H))
    for t in steps:
        xt = X[t]
        zr = _sigmoid(prev @ Uzr + xt[:, :2 * H] + bzr)
        z, r = zr[:, :H], zr[:, H:]
        c = np.tanh((r * prev) @ Uc + xt[:, 2 * H:] + bc)
        h = (1.0 - z) * prev + z * c
        prevs[t], zs[t], rs[t], cs[t], hs[t] = prev, z, r, c, h
        prev = h

    def back(g):
        dX = np.zeros_like(X)
        dUzr = np.zeros_like(Uzr)
        dUc = np.zeros_like(Uc)
        dbzr = np.zeros_like(bzr)
        dbc = np.zeros_like(bc)
        carry = np.zeros((B, H))
        for t in reversed(steps):
            dh = g[t] + carry
            hp, z, r, c = prevs[t], zs[t], rs[t], cs[t]
            dz = dh * (c - hp)
            dc = dh * z
            dprev = dh * (1.0 - z)
            dac = dc * (1.0 - c * c)
            rh = r * hp
            dUc += rh.T @ dac
            drh = dac @ Uc.T
            dr = drh * hp
            dprev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dazr = np.concatenate([daz, dar], axis=1)
            dUzr += hp.T @ dazr
            dprev += dazr @ Uzr.T
            dX[t, :, :2 * H] = dazr
            dX[t, :, 2 * H:] = dac
            dbzr += dazr.sum(axis=0)
            dbc += dac.sum(axis=0)
            carry = dprev
        return dX, dUzr, dUc, dbzr, dbc

    return Tensor._make(hs, (xp, u_zr, u_c, b_zr, b_c), back)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
