"""Adaptive-moment (Adam) parameter updates, deterministic by construction."""

from __future__ import annotations

import numpy as np

from .layers import Params


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0


def adam_step(params: Params, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One in-place update for every parameter that has a gradient.

    Raises FloatingPointError on non-finite gradients; nothing is mutated
    in that case so the caller can abort to the last good checkpoint.
    """
    grads = {}
    for name, t in params.tensors.items():
        if t.grad is None:
            continue
        if not np.all(np.isfinite(t.grad)):
            raise FloatingPointError(f"non-finite gradient in {name!r}")
        grads[name] = t.grad
    state.step += 1
    b1t = 1.0 - beta1 ** state.step
    b2t = 1.0 - beta2 ** state.step
    for name, g in grads.items():
        t = params.tensors[name]
        m = state.m.setdefault(name, np.zeros_like(t.data))
        v = state.v.setdefault(name, np.zeros_like(t.data))
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        t.data -= (lr * (m / b1t) / (np.sqrt(v / b2t) + eps)).astype(t.data.dtype)
