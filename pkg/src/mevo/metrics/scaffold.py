"""Murcko scaffolds: ring systems plus the linkers between them."""

from __future__ import annotations

import numpy as np

from ..molgraph import MAX_H, AtomFeature, BondType, MolGraph
from .rings import atoms_in_rings


def murcko_scaffold(mol: MolGraph) -> MolGraph:
    """Iteratively prune terminal non-ring atoms; acyclic input gives an
    empty graph.

    A pruned substituent's bond order is folded back into the anchor
    atom's hydrogen count, so toluene reduces exactly to benzene and the
    result stays valence-consistent.
    """
    n = len(mol.atoms)
    ring_atoms = atoms_in_rings(mol)
    keep = np.ones(n, dtype=bool)
    h_extra = np.zeros(n, dtype=int)
    bonds = np.array(mol.bonds)
    while True:
        degree = (bonds > 0).sum(axis=1)
        prune = [i for i in range(n) if keep[i] and degree[i] <= 1
                 and i not in ring_atoms]
        if not prune:
            break
        for i in prune:
            for j in np.nonzero(bonds[i])[0]:
                h_extra[j] += round({BondType.SINGLE: 1, BondType.DOUBLE: 2,
                                     BondType.TRIPLE: 3,
                                     BondType.AROMATIC: 1}[BondType(bonds[i, j])])
            bonds[i, :] = 0
            bonds[:, i] = 0
            keep[i] = False
    index = np.nonzero(keep)[0]
    atoms = tuple(
        AtomFeature(mol.atoms[i].el,
                    min(MAX_H, mol.atoms[i].h + int(h_extra[i])),
                    mol.atoms[i].q)
        for i in index)
    sub_bonds = bonds[np.ix_(index, index)]
    coords = mol.coords[index] if mol.coords is not None else None
    return MolGraph(atoms, sub_bonds, coords)
