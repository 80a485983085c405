"""Binding energy change, interaction fulfillment, and the final score.

dU_bind = U(complex) - U(pocket) - U(ligand), each leg independently
relaxed; negative is favorable.  S = -dU * rho with a clamp to zero for
net-repulsive poses so a clashing molecule can never outrank a benign
one on the strength of its fulfilled interactions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..molgraph import MolGraph
from .forcefield import (
    ForceFieldParams,
    System,
    complex_system,
    ligand_system,
    pocket_system,
)
from .interactions import detect_interactions, interaction_ratio
from .relax import RelaxError, RelaxResult, relax


class ScoringError(RuntimeError):
    pass


@dataclass(frozen=True)
class PreparedPocket:
    """Pocket residues plus their frozen force-field system, built once."""

    residues: tuple
    system: System

    @classmethod
    def from_residues(cls, residues, ff: ForceFieldParams):
        return cls(tuple(residues), pocket_system(residues, ff))


@dataclass
class ScoredMolecule:
    mol: MolGraph
    pose: np.ndarray
    delta_u: float
    rho: float
    score: float
    interactions: list = field(default_factory=list)
    ligand_energy: float = 0.0
    complex_energy: float = 0.0


def delta_u(pocket: PreparedPocket, mol: MolGraph, pose, ff: ForceFieldParams,
            max_iters: int = 300, tolerance: float = 0.1):
    """Binding energy change; returns (dU, relaxed complex pose, legs)."""
    try:
        lig = ligand_system(mol, ff, pose)
        free_leg = relax(lig, ff, max_iters, tolerance)
        comp = complex_system(pocket.system, lig)
        comp_leg = relax(comp, ff, max_iters, tolerance)
    except RelaxError as exc:
        raise ScoringError(f"relaxation failed: {exc}") from exc
    # The pocket is entirely frozen with no internal terms, so U(P) = 0.
    du = comp_leg.energy - free_leg.energy
    n_pocket = len(pocket.system.elements)
    relaxed_pose = comp_leg.coords[n_pocket:]
    return float(du), relaxed_pose, (free_leg, comp_leg)


def score(pocket: PreparedPocket, mol: MolGraph, pose, spec,
          ff: ForceFieldParams, max_iters: int = 300,
          tolerance: float = 0.1) -> ScoredMolecule:
    du, relaxed_pose, (free_leg, comp_leg) = delta_u(
        pocket, mol, pose, ff, max_iters, tolerance)
    records = detect_interactions(pocket.residues, mol, relaxed_pose)
    rho = interaction_ratio(records, spec)
    s = -du * rho if du <= 0.0 else 0.0
    return ScoredMolecule(
        mol=mol, pose=relaxed_pose, delta_u=du, rho=rho, score=s,
        interactions=records,
        ligand_energy=free_leg.energy, complex_energy=comp_leg.energy,
    )


def scored_csv_rows(scored_list):
    """Rows for the report file: id, dU, rho, S, interactions."""
    rows = [("id", "dU", "rho", "S", "interactions")]
    for k, sm in enumerate(scored_list):
        summary = ";".join(
            f"{r.kind}@{r.residue}" for r in sm.interactions) or "-"
        rows.append((str(k), f"{sm.delta_u:.4f}", f"{sm.rho:.4f}",
                     f"{sm.score:.4f}", summary))
    return rows
