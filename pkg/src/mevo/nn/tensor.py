"""Reverse-mode autodiff over dense numpy arrays.

Small by design: only the operations the codec, the denoiser and the
condition embedders actually use.  No graph rewriting, no fusion -- every
op records its parents and a closure that accumulates gradients into them.
Precision follows the input arrays (float32 for training, float64 when a
gradient check asks for it).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "embedding_lookup",
    "cross_entropy",
    "cross_entropy_rows",
    "squared_error",
]


class Tensor:
    """A numpy array plus an optional gradient and the tape to fill it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=()):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- autodiff machinery --------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from this (scalar) tensor through the tape."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.data.shape}")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not (t.requires_grad or t._parents):
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def detach(self):
        return Tensor(self.data)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other, self.data.dtype)
        out = Tensor(self.data + other.data, _parents=(self, other))

        def back(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = back
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other, self.data.dtype))

    def __rsub__(self, other):
        return as_tensor(other, self.data.dtype) + (-self)

    def __mul__(self, other):
        other = as_tensor(other, self.data.dtype)
        out = Tensor(self.data * other.data, _parents=(self, other))

        def back(g):
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = back
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * as_tensor(other, self.data.dtype) ** -1.0

    def __rtruediv__(self, other):
        return as_tensor(other, self.data.dtype) * self ** -1.0

    def __pow__(self, exponent):
        exponent = float(exponent)
        out = Tensor(self.data ** exponent, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * exponent * self.data ** (exponent - 1.0))
        return out

    def __matmul__(self, other):
        other = as_tensor(other, self.data.dtype)
        out = Tensor(self.data @ other.data, _parents=(self, other))

        def back(g):
            a, b = self.data, other.data
            if b.ndim == 1:
                b2, g2 = b[:, None], g[..., None]
            else:
                b2, g2 = b, g
            if a.ndim == 1:
                ga = (g2 @ np.swapaxes(b2, -1, -2))[..., 0, :]
                gb = a[:, None] @ g2[None, :] if b.ndim > 1 else np.outer(a, g)[:, 0]
            else:
                ga = g2 @ np.swapaxes(b2, -1, -2)
                gb = np.swapaxes(a, -1, -2) @ g2
                if b.ndim == 1:
                    gb = gb[..., 0]
            self._accumulate(_unbroadcast(ga, a.shape))
            other._accumulate(_unbroadcast(gb, b.shape))

        out._backward = back
        return out

    # -- shape ops -----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = Tensor(self.data.reshape(shape), _parents=(self,))
        out._backward = lambda g: self._accumulate(g.reshape(old))
        return out

    def swapaxes(self, a, b):
        out = Tensor(np.swapaxes(self.data, a, b), _parents=(self,))
        out._backward = lambda g: self._accumulate(np.swapaxes(g, a, b))
        return out

    def expand_dims(self, axis):
        out = Tensor(np.expand_dims(self.data, axis), _parents=(self,))
        out._backward = lambda g: self._accumulate(np.squeeze(g, axis=axis))
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], _parents=(self,))

        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accumulate(full)

        out._backward = back
        return out

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))
        shape, nd = self.data.shape, self.data.ndim

        def back(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, shape).copy() if np.ndim(g) == 0 or g.shape != shape else g)
                return
            gg = g
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % nd for a in axes):
                    gg = np.expand_dims(gg, ax)
            self._accumulate(np.broadcast_to(gg, shape).copy())

        out._backward = back
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- pointwise nonlinearities --------------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), _parents=(self,))
        out._backward = lambda g: self._accumulate(g * out.data)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def sqrt(self):
        return self ** 0.5

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(s, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * s * (1.0 - s))
        return out

    def silu(self):
        """x * sigmoid(x); the smooth unit used throughout the nets."""
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(self.data * s, _parents=(self,))
        out._backward = lambda g: self._accumulate(g * (s * (1.0 + self.data * (1.0 - s))))
        return out

    def log_softmax(self, axis=-1):
        x = self.data
        m = x.max(axis=axis, keepdims=True)
        z = x - m
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        out = Tensor(z - lse, _parents=(self,))

        def back(g):
            p = np.exp(out.data)
            self._accumulate(g - p * g.sum(axis=axis, keepdims=True))

        out._backward = back
        return out

    def softmax(self, axis=-1):
        x = self.data
        z = x - x.max(axis=axis, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(p, _parents=(self,))

        def back(g):
            inner = (g * p).sum(axis=axis, keepdims=True)
            self._accumulate(p * (g - inner))

        out._backward = back
        return out


def as_tensor(value, like=None) -> Tensor:
    """Wrap ``value`` as a constant Tensor.

    Plain Python scalars take the dtype of ``like`` so that float32
    graphs are not silently promoted to float64.
    """
    if isinstance(value, Tensor):
        return value
    if like is not None and not isinstance(value, np.ndarray):
        return Tensor(np.asarray(value, dtype=like))
    return Tensor(value)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t._accumulate(g[tuple(sl)])

    out._backward = back
    return out


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table`` (scatter-add on the way back)."""
    idx = np.asarray(indices)
    out = Tensor(table.data[idx], _parents=(table,))

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        table._accumulate(full)

    out._backward = back
    return out


def cross_entropy(logits: Tensor, target_index: int) -> Tensor:
    """-log softmax(logits)[target] for a single categorical decision."""
    if not np.all(np.isfinite(logits.data)):
        raise FloatingPointError("non-finite logits in cross_entropy")
    k = int(target_index)
    if not 0 <= k < logits.data.shape[-1]:
        raise IndexError(f"target {k} out of range for {logits.data.shape[-1]} classes")
    return -(logits.log_softmax(axis=-1)[..., k])


def cross_entropy_rows(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean -log softmax over the leading axes; ``targets`` holds class ids.

    ``weights`` (same shape as ``targets``) masks padded rows; the mean is
    taken over the total weight so padding does not dilute the loss.
    """
    if not np.all(np.isfinite(logits.data)):
        raise FloatingPointError("non-finite logits in cross_entropy_rows")
    targets = np.asarray(targets)
    lp = logits.log_softmax(axis=-1)
    flat = lp.reshape((-1, logits.shape[-1]))
    nll = -flat[np.arange(flat.shape[0]), targets.reshape(-1)]
    if weights is None:
        return nll.mean()
    w = np.asarray(weights, dtype=logits.data.dtype).reshape(-1)
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("cross_entropy_rows: all weights zero")
    return (nll * w).sum() * (1.0 / total)


def squared_error(pred: Tensor, target, weights=None) -> Tensor:
    """Mean squared error; optional per-row weights over leading axes."""
    target = np.asarray(target)
    diff = pred - target
    sq = diff * diff
    if weights is None:
        return sq.mean()
    w = np.asarray(weights, dtype=pred.data.dtype)
    while w.ndim < sq.ndim:
        w = w[..., None]
    total = float(np.broadcast_to(w, sq.shape).sum())
    return (sq * w).sum() * (1.0 / total)
