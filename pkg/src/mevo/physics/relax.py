"""Local geometry relaxation: Barzilai-Borwein steps with Armijo backtracking.

Monotone by construction -- a step is only accepted when it satisfies the
sufficient-decrease condition, so the energy trace never rises.  Frozen
atoms (the protein) keep zero force and never move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forcefield import ForceFieldParams, System, energy_and_forces

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40
STEP_MIN, STEP_MAX = 1e-8, 1.0


class RelaxError(RuntimeError):
    """Relaxation could not start or produced non-finite energy."""


@dataclass
class RelaxResult:
    coords: np.ndarray
    energy: float
    iterations: int
    converged: bool
    energy_trace: list


def max_force(forces: np.ndarray, free: np.ndarray) -> float:
    if not free.any():
        return 0.0
    return float(np.abs(forces[free]).max())


def relax(system: System, ff: ForceFieldParams, max_iters: int = 500,
          tolerance: float = 0.1) -> RelaxResult:
    """Minimize until the largest force component drops below tolerance."""
    x = system.coords.copy()
    free = ~system.frozen
    energy, forces = energy_and_forces(system, ff, x)
    if not np.isfinite(energy):
        raise RelaxError(f"non-finite starting energy {energy}")
    trace = [energy]

    grad = -forces
    step = 1e-4
    x_prev = grad_prev = None
    iterations = 0
    for iterations in range(max_iters):
        if max_force(forces, free) < tolerance:
            return RelaxResult(x, energy, iterations, True, trace)

        if x_prev is not None:
            s = (x - x_prev)[free].ravel()
            y = (grad - grad_prev)[free].ravel()
            sy = float(s @ y)
            if sy > 1e-14:
                step = float(s @ s) / sy
            step = float(np.clip(step, STEP_MIN, STEP_MAX))

        direction = np.zeros_like(x)
        direction[free] = -grad[free]
        slope = float((grad[free] * direction[free]).sum())
        if slope >= 0.0:
            return RelaxResult(x, energy, iterations, False, trace)

        t = step
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_try = x + t * direction
            e_try, f_try = energy_and_forces(system, ff, x_try)
            if np.isfinite(e_try) and e_try <= energy + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return RelaxResult(x, energy, iterations, False, trace)

        x_prev, grad_prev = x, grad
        x, energy, forces = x_try, e_try, f_try
        grad = -forces
        trace.append(energy)

    converged = max_force(forces, free) < tolerance
    return RelaxResult(x, energy, max_iters, converged, trace)
