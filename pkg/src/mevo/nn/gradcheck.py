"""Central-difference verification of analytic gradients.

Runs in float64 regardless of the training dtype; the returned figure is
the worst relative disagreement over every parameter element, using
|a - n| / (|a| + |n| + 1e-12) so that zero gradients compare cleanly.
"""

from __future__ import annotations

import numpy as np

from .layers import Params


def grad_check(f, params: Params, epsilon: float = 1e-5,
               names: list[str] | None = None) -> float:
    """Max relative error between analytic and central-difference grads.

    ``f`` maps a Params instance to a scalar Tensor.  ``epsilon`` must lie
    in (0, 1e-2]; ``names`` restricts the check to a parameter subset.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ValueError(f"epsilon {epsilon} outside (0, 1e-2]")
    p64 = params.astype(np.float64)
    p64.zero_grad()
    loss = f(p64)
    loss.backward()
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        for name, t in p64.tensors.items()
    }
    worst = 0.0
    for name in (names if names is not None else p64.names()):
        t = p64.tensors[name]
        flat = t.data.reshape(-1)
        ga = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(f(p64).data)
            flat[i] = orig - epsilon
            lo = float(f(p64).data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            rel = abs(ga[i] - numeric) / (abs(ga[i]) + abs(numeric) + 1e-12)
            worst = max(worst, rel)
    return worst
