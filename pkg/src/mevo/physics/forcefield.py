"""Simplified molecular-mechanics force field.

Energy model: harmonic bonds and angles within the ligand, 12-6
Lennard-Jones plus Coulomb with a distance-dependent dielectric
(eps(r) = 4r) between nonbonded pairs.  A pair is nonbonded when the
atoms are at least four bonds apart in the molecular graph or belong to
different molecules; pairs beyond the cutoff contribute nothing.

The pocket is frozen: protein-protein terms are constant and never
enter the pair lists, so U(pocket alone) is identically zero and energy
differences are ligand-driven.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..molgraph import BondType, MolGraph

_DATA = Path(__file__).resolve().parent.parent / "data"

# Lennard-Jones well positions x (Angstrom) and depths (kcal/mol),
# UFF-flavoured; sigma = x / 2^(1/6).
_LJ_TABLE = {
    "C": (3.851, 0.105), "N": (3.660, 0.069), "O": (3.500, 0.060),
    "S": (4.035, 0.274), "P": (4.147, 0.305), "F": (3.364, 0.050),
    "Cl": (3.947, 0.227), "Br": (4.189, 0.251), "I": (4.500, 0.339),
    "B": (4.083, 0.180), "H": (2.886, 0.044),
}

# Net charges of ionizable side chains, by (residue, atom name).
RESIDUE_CHARGES = {
    ("ASP", "OD1"): -0.5, ("ASP", "OD2"): -0.5,
    ("GLU", "OE1"): -0.5, ("GLU", "OE2"): -0.5,
    ("LYS", "NZ"): 1.0,
    ("ARG", "NH1"): 0.5, ("ARG", "NH2"): 0.5,
}

COULOMB_K = 332.06          # kcal*A/(mol*e^2)
DIELECTRIC_SLOPE = 4.0      # eps(r) = 4r

TETRAHEDRAL = np.deg2rad(109.47)
TRIGONAL = np.deg2rad(120.0)
LINEAR = np.deg2rad(180.0)


class ParameterError(ValueError):
    """An atom the force field has no parameters for."""


@dataclass(frozen=True)
class ForceFieldParams:
    sigma: dict
    epsilon: dict
    k_bond: float = 300.0       # kcal/mol/A^2
    k_angle: float = 50.0       # kcal/mol/rad^2
    cutoff: float = 10.0        # A
    bond_lengths: dict = field(default_factory=dict)
    covalent_radii: dict = field(default_factory=dict)
    order_scale: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cutoff < 8.0:
            raise ValueError("cutoff below 8 A truncates real contacts")
        for el, s in self.sigma.items():
            if s <= 0 or self.epsilon[el] <= 0:
                raise ValueError(f"non-positive LJ parameter for {el}")

    def lj(self, element: str):
        try:
            return self.sigma[element], self.epsilon[element]
        except KeyError:
            raise ParameterError(f"no LJ parameters for element {element!r}")

    def ideal_length(self, el_a: str, el_b: str, bond: BondType) -> float:
        name = bond.name.lower()
        e1, e2 = sorted((el_a, el_b))
        hit = self.bond_lengths.get(f"{e1}|{e2}|{name}")
        if hit is not None:
            return hit
        try:
            base = self.covalent_radii[e1] + self.covalent_radii[e2]
        except KeyError:
            raise ParameterError(f"no bond-length data for {e1}-{e2}")
        return base * self.order_scale[name]


def default_forcefield() -> ForceFieldParams:
    tables = json.loads((_DATA / "bond_lengths.json").read_text())
    sigma = {el: x / 2 ** (1 / 6) for el, (x, _) in _LJ_TABLE.items()}
    eps = {el: e for el, (_, e) in _LJ_TABLE.items()}
    return ForceFieldParams(
        sigma=sigma, epsilon=eps,
        bond_lengths=tables["lengths"],
        covalent_radii=tables["covalent_radii"],
        order_scale=tables["order_scale"],
    )


@dataclass
class System:
    """Flattened simulation system: term index arrays over one coord block."""

    elements: list
    charges: np.ndarray          # smeared partial charges, len n
    coords: np.ndarray           # (n, 3), the working/current geometry
    frozen: np.ndarray           # bool mask, len n
    bond_idx: np.ndarray         # (nb, 2) int
    bond_r0: np.ndarray          # (nb,)
    angle_idx: np.ndarray        # (na, 3) int, middle = vertex
    angle_t0: np.ndarray         # (na,)
    pair_idx: np.ndarray         # (np, 2) int, nonbonded pairs
    n_ligand: int                # trailing atoms are the ligand

    def lj_pair_tables(self, ff: ForceFieldParams):
        sig = np.array([ff.lj(el)[0] for el in self.elements])
        eps = np.array([ff.lj(el)[1] for el in self.elements])
        i, j = self.pair_idx.T if len(self.pair_idx) else (np.array([], int),) * 2
        return (np.sqrt(sig[i] * sig[j]), np.sqrt(eps[i] * eps[j]),
                self.charges[i] * self.charges[j])


def smear_charges(mol: MolGraph) -> np.ndarray:
    """Spread each formal charge: half on the atom, half over neighbours."""
    q = np.array([a.q for a in mol.atoms], dtype=np.float64)
    out = np.zeros_like(q)
    for i, qi in enumerate(q):
        if qi == 0.0:
            continue
        nbrs = mol.neighbors(i)
        if not nbrs:
            out[i] += qi
            continue
        out[i] += 0.5 * qi
        for j in nbrs:
            out[j] += 0.5 * qi / len(nbrs)
    return out


def _graph_distances(mol: MolGraph, limit: int = 4) -> np.ndarray:
    """All-pairs bond-count distances, capped at ``limit``."""
    n = len(mol.atoms)
    dist = np.full((n, n), limit, dtype=np.int8)
    adj = [mol.neighbors(i) for i in range(n)]
    for src in range(n):
        dist[src, src] = 0
        frontier = [src]
        d = 0
        while frontier and d < limit - 1:
            d += 1
            nxt = []
            for i in frontier:
                for j in adj[i]:
                    if dist[src, j] > d:
                        dist[src, j] = d
                        nxt.append(j)
            frontier = nxt
    return dist


def _angle_theta0(mol: MolGraph, center: int) -> float:
    row = mol.bonds[center]
    codes = row[row != BondType.NONE]
    if np.any(codes == BondType.TRIPLE) or np.count_nonzero(codes == BondType.DOUBLE) >= 2:
        return LINEAR
    if np.any(codes == BondType.DOUBLE) or np.count_nonzero(codes == BondType.AROMATIC) >= 2:
        return TRIGONAL
    return TETRAHEDRAL


def ligand_system(mol: MolGraph, ff: ForceFieldParams,
                  coords=None) -> System:
    """Build a free-ligand system from a molecule with a 3D pose."""
    if coords is None:
        coords = mol.coords
    if coords is None:
        raise ValueError("ligand needs coordinates")
    coords = np.asarray(coords, dtype=np.float64).copy()
    n = len(mol.atoms)
    elements = [a.el for a in mol.atoms]
    for el in elements:
        ff.lj(el)   # raise early with the offending element

    bonds, r0 = [], []
    for i, j, bt in mol.bond_pairs():
        bonds.append((i, j))
        r0.append(ff.ideal_length(elements[i], elements[j], bt))

    angles, t0 = [], []
    for c in range(n):
        nbrs = mol.neighbors(c)
        theta = _angle_theta0(mol, c)
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                angles.append((nbrs[x], c, nbrs[y]))
                t0.append(theta)

    dist = _graph_distances(mol, limit=4)
    iu, ju = np.triu_indices(n, k=1)
    far = dist[iu, ju] >= 4
    pairs = np.stack([iu[far], ju[far]], axis=1) if far.any() else np.zeros((0, 2), int)

    return System(
        elements=elements,
        charges=smear_charges(mol),
        coords=coords,
        frozen=np.zeros(n, dtype=bool),
        bond_idx=np.array(bonds, dtype=int).reshape(-1, 2),
        bond_r0=np.array(r0, dtype=np.float64),
        angle_idx=np.array(angles, dtype=int).reshape(-1, 3),
        angle_t0=np.array(t0, dtype=np.float64),
        pair_idx=pairs,
        n_ligand=n,
    )


def pocket_system(residues, ff: ForceFieldParams) -> System:
    """Frozen protein atoms only; no internal energy terms."""
    elements, charges, coords = [], [], []
    for res in residues:
        for atom in res.atoms:
            elements.append(atom.element)
            charges.append(RESIDUE_CHARGES.get((res.name, atom.name), 0.0))
            coords.append(atom.xyz)
    for el in elements:
        ff.lj(el)
    n = len(elements)
    return System(
        elements=elements,
        charges=np.array(charges, dtype=np.float64),
        coords=np.array(coords, dtype=np.float64).reshape(-1, 3),
        frozen=np.ones(n, dtype=bool),
        bond_idx=np.zeros((0, 2), int), bond_r0=np.zeros(0),
        angle_idx=np.zeros((0, 3), int), angle_t0=np.zeros(0),
        pair_idx=np.zeros((0, 2), int),
        n_ligand=0,
    )


def complex_system(pocket: System, ligand: System) -> System:
    """Concatenate pocket and ligand; all cross pairs are nonbonded."""
    np_, nl = len(pocket.elements), len(ligand.elements)
    cross_i = np.repeat(np.arange(np_), nl)
    cross_j = np_ + np.tile(np.arange(nl), np_)
    cross = np.stack([cross_i, cross_j], axis=1)
    return System(
        elements=pocket.elements + ligand.elements,
        charges=np.concatenate([pocket.charges, ligand.charges]),
        coords=np.concatenate([pocket.coords, ligand.coords], axis=0),
        frozen=np.concatenate([pocket.frozen, ligand.frozen]),
        bond_idx=ligand.bond_idx + np_,
        bond_r0=ligand.bond_r0,
        angle_idx=ligand.angle_idx + np_,
        angle_t0=ligand.angle_t0,
        pair_idx=np.concatenate([ligand.pair_idx + np_, cross], axis=0),
        n_ligand=nl,
    )


def energy_and_forces(system: System, ff: ForceFieldParams, coords=None):
    """Total potential energy (kcal/mol) and per-atom forces (-dU/dx)."""
    x = system.coords if coords is None else np.asarray(coords, dtype=np.float64)
    n = len(system.elements)
    forces = np.zeros((n, 3))
    energy = 0.0

    if len(system.bond_idx):
        bi, bj = system.bond_idx.T
        d = x[bi] - x[bj]
        r = np.linalg.norm(d, axis=1)
        dr = r - system.bond_r0
        energy += float(ff.k_bond * (dr * dr).sum())
        # dU/dr = 2 k dr along the bond axis
        f = (2.0 * ff.k_bond * dr / np.maximum(r, 1e-12))[:, None] * d
        np.add.at(forces, bi, -f)
        np.add.at(forces, bj, f)

    if len(system.angle_idx):
        ai, ac, ak = system.angle_idx.T
        u = x[ai] - x[ac]
        v = x[ak] - x[ac]
        ru = np.linalg.norm(u, axis=1)
        rv = np.linalg.norm(v, axis=1)
        cos = (u * v).sum(axis=1) / np.maximum(ru * rv, 1e-12)
        cos = np.clip(cos, -1.0, 1.0)
        theta = np.arccos(cos)
        dt = theta - system.angle_t0
        energy += float(ff.k_angle * (dt * dt).sum())
        # dtheta/d(cos) = -1/sin(theta); guard the linear geometry pole.
        sin = np.sqrt(np.maximum(1.0 - cos * cos, 1e-12))
        coeff = 2.0 * ff.k_angle * dt * (-1.0 / sin)
        dcos_du = (v / (ru * rv)[:, None]
                   - (cos / (ru * ru))[:, None] * u)
        dcos_dv = (u / (ru * rv)[:, None]
                   - (cos / (rv * rv))[:, None] * v)
        gi = coeff[:, None] * dcos_du
        gk = coeff[:, None] * dcos_dv
        np.add.at(forces, ai, -gi)
        np.add.at(forces, ak, -gk)
        np.add.at(forces, ac, gi + gk)

    if len(system.pair_idx):
        sig, eps, qq = system.lj_pair_tables(ff)
        pi, pj = system.pair_idx.T
        d = x[pi] - x[pj]
        r = np.linalg.norm(d, axis=1)
        live = r <= ff.cutoff
        if live.any():
            pi, pj, d = pi[live], pj[live], d[live]
            r, sig, eps, qq = r[live], sig[live], eps[live], qq[live]
            r = np.maximum(r, 1e-6)
            sr6 = (sig / r) ** 6
            lj = 4.0 * eps * (sr6 * sr6 - sr6)
            coul = COULOMB_K * qq / (DIELECTRIC_SLOPE * r * r)
            energy += float(lj.sum() + coul.sum())
            dudr = (4.0 * eps * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r
                    - 2.0 * COULOMB_K * qq / (DIELECTRIC_SLOPE * r ** 3))
            f = (dudr / r)[:, None] * d
            np.add.at(forces, pi, -f)
            np.add.at(forces, pj, f)

    forces[system.frozen] = 0.0
    return energy, forces


def potential_energy(system: System, ff: ForceFieldParams, coords=None) -> float:
    return energy_and_forces(system, ff, coords)[0]
