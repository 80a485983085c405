"""2D graph to 3D conformer: tree placement plus force-field relaxation.

Atoms are placed breadth-first at ideal bond lengths, opening ideal
angles against already-placed neighbours, with dihedral spread around
the parent bond.  The physics relaxer then pulls ring-closure bonds to
length and resolves residual strain.  Quality gates: every bond within
15% of its ideal length, no nonbonded pair closer than 1 A.
"""

from __future__ import annotations

import numpy as np

from ..molgraph import BondType, MolGraph
from ..physics.forcefield import ForceFieldParams, default_forcefield, ligand_system
from ..physics.relax import relax

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
BOND_TOLERANCE = 0.15
CLASH_MIN = 1.0


class EmbedError(RuntimeError):
    """Conformer generation failed its geometry gates."""


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else np.array([1.0, 0.0, 0.0])


def _any_perpendicular(u):
    probe = np.array([1.0, 0.0, 0.0])
    if abs(u[0]) > 0.9:
        probe = np.array([0.0, 1.0, 0.0])
    return _unit(np.cross(u, probe))


def _theta0(mol: MolGraph, center: int) -> float:
    row = mol.bonds[center]
    codes = row[row != 0]
    if (codes == BondType.TRIPLE).any() or (codes == BondType.DOUBLE).sum() >= 2:
        return np.pi
    if (codes == BondType.DOUBLE).any() or (codes == BondType.AROMATIC).sum() >= 2:
        return np.deg2rad(120.0)
    return np.deg2rad(109.47)


def _tree_coords(mol: MolGraph, ff: ForceFieldParams, rng) -> np.ndarray:
    n = len(mol.atoms)
    coords = np.zeros((n, 3))
    placed = np.zeros(n, dtype=bool)
    order = []
    # BFS over the molecular graph from atom 0
    queue = [0]
    placed_set = {0}
    while queue:
        i = queue.pop(0)
        order.append(i)
        for j in mol.neighbors(i):
            if j not in placed_set:
                placed_set.add(j)
                queue.append(j)
    parent = {order[0]: None}
    for i in order:
        for j in mol.neighbors(i):
            if j not in parent:
                parent[j] = i

    child_counter = dict.fromkeys(range(n), 0)
    for k, i in enumerate(order):
        p = parent[i]
        if p is None:
            coords[i] = 0.0
            placed[i] = True
            continue
        bt = BondType(int(mol.bonds[p, i]))
        r0 = ff.ideal_length(mol.atoms[p].el, mol.atoms[i].el, bt)
        anchor = coords[p]
        placed_nbrs = [j for j in mol.neighbors(p) if placed[j] and j != i]
        if not placed_nbrs:
            direction = _unit(rng.normal(size=3))
        else:
            theta = _theta0(mol, p)
            u = _unit(coords[placed_nbrs[0]] - anchor)
            w1 = _any_perpendicular(u)
            w2 = np.cross(u, w1)
            phi = GOLDEN_ANGLE * child_counter[p] + rng.uniform(0, 0.3)
            ring = np.cos(phi) * w1 + np.sin(phi) * w2
            direction = np.cos(theta) * u + np.sin(theta) * ring
        child_counter[p] = child_counter.get(p, 0) + 1
        coords[i] = anchor + r0 * direction
        placed[i] = True
    return coords


def check_geometry(mol: MolGraph, coords, ff: ForceFieldParams):
    """(ok, problems) against the bond-length and clash gates."""
    problems = []
    for i, j, bt in mol.bond_pairs():
        r0 = ff.ideal_length(mol.atoms[i].el, mol.atoms[j].el, bt)
        d = float(np.linalg.norm(coords[i] - coords[j]))
        if abs(d - r0) > BOND_TOLERANCE * r0:
            problems.append(f"bond {i}-{j}: {d:.2f} A vs ideal {r0:.2f}")
    system = ligand_system(mol, ff, coords)
    if len(system.pair_idx):
        pi, pj = system.pair_idx.T
        d = np.linalg.norm(coords[pi] - coords[pj], axis=1)
        for k in np.nonzero(d < CLASH_MIN)[0]:
            problems.append(
                f"clash {pi[k]}-{pj[k]}: {d[k]:.2f} A")
    return len(problems) == 0, problems


def embed_conformer(mol: MolGraph, seed, ff: ForceFieldParams = None,
                    max_iters: int = 2000, attempts: int = 5) -> MolGraph:
    """Assign 3D coordinates; deterministic for a given seed."""
    if ff is None:
        ff = default_forcefield()
    n = len(mol.atoms)
    if n == 0:
        raise EmbedError("empty molecule")
    if n == 1:
        return mol.with_coords(np.zeros((1, 3)))

    problems = []
    for attempt in range(attempts):
        rng = np.random.default_rng((seed, attempt))
        coords = _tree_coords(mol, ff, rng)
        system = ligand_system(mol, ff, coords)
        result = relax(system, ff, max_iters=max_iters, tolerance=0.1)
        ok, problems = check_geometry(mol, result.coords, ff)
        if ok:
            return mol.with_coords(result.coords)
    raise EmbedError(
        f"no valid conformer after {attempts} attempts: {problems[:3]}")


def canonical_orientation(coords: np.ndarray) -> np.ndarray:
    """Center and rotate onto principal axes with deterministic signs."""
    x = np.asarray(coords, dtype=np.float64)
    x = x - x.mean(axis=0)
    if len(x) == 1:
        return x
    cov = x.T @ x
    _, vecs = np.linalg.eigh(cov)
    axes = vecs[:, ::-1]           # descending variance
    proj = x @ axes
    for k in range(3):
        third = float((proj[:, k] ** 3).sum())
        if third < -1e-9:
            axes[:, k] = -axes[:, k]
    # Right-handed frame
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    return x @ axes
