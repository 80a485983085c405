"""Parameter container and the layer zoo: linear/MLP, multi-head
self-attention, layer norm, embedding tables, sinusoidal timestep features.

Layers are pure functions ``f(params, prefix, x)``; a :class:`Params`
instance owns every named tensor.  Initialization is fan-in-scaled uniform
from a caller-supplied seeded generator so entire training runs replay
bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, embedding_lookup

ACTIVATION = "silu"  # recorded in checkpoints; the only nonlinearity used


class ShapeError(ValueError):
    """Raised when an input does not match a layer's declared width."""


class Params:
    """Named map of trainable tensors plus layer hyperparameters."""

    def __init__(self, meta: dict | None = None):
        self.tensors: dict[str, Tensor] = {}
        self.meta: dict = dict(meta or {})

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data), requires_grad=True)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def astype(self, dtype) -> "Params":
        out = Params(self.meta)
        for name, t in self.tensors.items():
            out.add(name, t.data.astype(dtype))
        return out

    def count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# -- linear / MLP ------------------------------------------------------


def linear_init(params: Params, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator, dtype=np.float32):
    params.add(f"{name}.w", _uniform(rng, (fan_in, fan_out), fan_in, dtype))
    params.add(f"{name}.b", np.zeros(fan_out, dtype=dtype))


def linear(params: Params, name: str, x: Tensor) -> Tensor:
    w = params[f"{name}.w"]
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"{name}: input width {x.shape[-1]}, expected {w.shape[0]}")
    return x @ w + params[f"{name}.b"]


def mlp_init(params: Params, prefix: str, widths: list[int],
             rng: np.random.Generator, dtype=np.float32):
    """widths = [in, hidden..., out]; silu between layers, linear last."""
    if len(widths) < 2:
        raise ValueError("an MLP needs at least input and output widths")
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        linear_init(params, f"{prefix}.l{i}", a, b, rng, dtype)
    params.meta.setdefault("mlp", {})[prefix] = list(widths)


def mlp_forward(params: Params, prefix: str, x: Tensor) -> Tensor:
    widths = params.meta["mlp"][prefix]
    h = x
    for i in range(len(widths) - 1):
        h = linear(params, f"{prefix}.l{i}", h)
        if i < len(widths) - 2:
            h = h.silu()
    return h


# -- normalization -----------------------------------------------------


def layer_norm_init(params: Params, name: str, dim: int, dtype=np.float32):
    params.add(f"{name}.g", np.ones(dim, dtype=dtype))
    params.add(f"{name}.o", np.zeros(dim, dtype=dtype))


def layer_norm(params: Params, name: str, x: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    cent = x - mu
    var = (cent * cent).mean(axis=-1, keepdims=True)
    norm = cent * (var + eps) ** -0.5
    return norm * params[f"{name}.g"] + params[f"{name}.o"]


# -- attention ---------------------------------------------------------


def attention_init(params: Params, prefix: str, dim: int, heads: int,
                   rng: np.random.Generator, dtype=np.float32):
    if dim % heads != 0:
        raise ValueError(f"model width {dim} not divisible by {heads} heads")
    for part in ("q", "k", "v", "o"):
        linear_init(params, f"{prefix}.{part}", dim, dim, rng, dtype)
    params.meta.setdefault("attn", {})[prefix] = {"dim": dim, "heads": heads}


def attention_forward(params: Params, prefix: str, tokens: Tensor,
                      mask: np.ndarray | None = None) -> Tensor:
    """Multi-head self-attention over ``tokens`` of shape (..., L, dim).

    ``mask`` has shape (..., L) with 1 for valid positions; masked keys get
    an additive -1e9 pre-softmax so they contribute exactly zero weight.
    """
    cfg = params.meta["attn"][prefix]
    dim, heads = cfg["dim"], cfg["heads"]
    if tokens.shape[-2] == 0:
        raise ValueError("attention over an empty sequence")
    if tokens.shape[-1] != dim:
        raise ShapeError(f"{prefix}: token width {tokens.shape[-1]}, expected {dim}")
    hd = dim // heads
    lead = tokens.shape[:-2]
    L = tokens.shape[-2]

    def split(t):
        return t.reshape(lead + (L, heads, hd)).swapaxes(-3, -2)  # (..., H, L, hd)

    q = split(linear(params, f"{prefix}.q", tokens))
    k = split(linear(params, f"{prefix}.k", tokens))
    v = split(linear(params, f"{prefix}.v", tokens))
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
    if mask is not None:
        m = np.asarray(mask, dtype=tokens.dtype)
        bias = (1.0 - m) * -1e9
        bias = bias[..., None, None, :]  # broadcast over heads and queries
        scores = scores + bias
    attn = scores.softmax(axis=-1)
    ctx = (attn @ v).swapaxes(-3, -2).reshape(lead + (L, dim))
    return linear(params, f"{prefix}.o", ctx)


def block_init(params: Params, prefix: str, dim: int, heads: int, ff: int,
               rng: np.random.Generator, dtype=np.float32):
    layer_norm_init(params, f"{prefix}.ln1", dim, dtype)
    attention_init(params, f"{prefix}.attn", dim, heads, rng, dtype)
    layer_norm_init(params, f"{prefix}.ln2", dim, dtype)
    mlp_init(params, f"{prefix}.ff", [dim, ff, dim], rng, dtype)


def block_forward(params: Params, prefix: str, x: Tensor,
                  mask: np.ndarray | None = None) -> Tensor:
    """Pre-norm transformer block: attention then feed-forward, residual."""
    x = x + attention_forward(params, f"{prefix}.attn",
                              layer_norm(params, f"{prefix}.ln1", x), mask)
    return x + mlp_forward(params, f"{prefix}.ff",
                           layer_norm(params, f"{prefix}.ln2", x))


# -- embeddings --------------------------------------------------------


def embedding_init(params: Params, name: str, count: int, dim: int,
                   rng: np.random.Generator, dtype=np.float32):
    params.add(name, _uniform(rng, (count, dim), dim, dtype))


def embedding(params: Params, name: str, indices) -> Tensor:
    return embedding_lookup(params[name], indices)


def timestep_features(t, dim: int, max_period: float = 10_000.0) -> np.ndarray:
    """Sinusoidal features for (arrays of) integer timesteps, shape (..., dim)."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))
    ang = t[..., None] * freqs
    feats = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
    if feats.shape[-1] < dim:
        feats = np.concatenate([feats, np.zeros(t.shape + (dim - feats.shape[-1],))], axis=-1)
    return feats
