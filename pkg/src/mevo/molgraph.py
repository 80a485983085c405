"""Heavy-atom molecular graphs: atoms, bonds, coordinates, valence rules.

A molecule is G = (V, E, X): categorical atom features v_i = (element,
implicit hydrogen count, formal charge), a symmetric bond-type matrix,
and optional 3D coordinates in Angstroms.  Hydrogens are never graph
nodes; they live in the per-atom ``h`` count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from math import ceil, floor

import numpy as np

ELEMENTS = ("C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "B")
ELEMENT_INDEX = {el: i for i, el in enumerate(ELEMENTS)}

# Average atomic masses (amu); hydrogen included for formula weights.
MASSES = {
    "C": 12.011, "N": 14.007, "O": 15.999, "S": 32.06, "P": 30.974,
    "F": 18.998, "Cl": 35.45, "Br": 79.904, "I": 126.904, "B": 10.81,
    "H": 1.008,
}

MAX_H = 4
CHARGE_RANGE = (-2, 2)


class BondType(IntEnum):
    NONE = 0
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


BOND_ORDER = {
    BondType.SINGLE: 1.0,
    BondType.DOUBLE: 2.0,
    BondType.TRIPLE: 3.0,
    BondType.AROMATIC: 1.5,
}

# Allowed total valence (bond-order sum + implicit hydrogens) keyed by
# (element, formal charge).  Pairs absent from the table have no valid
# valence state and always fail the check.
VALENCE_TABLE = {
    ("C", 0): (4,), ("C", 1): (3,), ("C", -1): (3,),
    ("N", 0): (3,), ("N", 1): (4,), ("N", -1): (2,),
    ("O", 0): (2,), ("O", 1): (3,), ("O", -1): (1,),
    ("S", 0): (2, 4, 6), ("S", 1): (3,), ("S", -1): (1,),
    ("P", 0): (3, 5), ("P", 1): (4,),
    ("F", 0): (1,), ("F", -1): (0,),
    ("Cl", 0): (1,), ("Cl", -1): (0,),
    ("Br", 0): (1,), ("Br", -1): (0,),
    ("I", 0): (1,), ("I", -1): (0,),
    ("B", 0): (3,), ("B", -1): (4,),
}


class MolError(ValueError):
    """Malformed molecular data."""


class GeometryError(MolError):
    """An operation needed coordinates the molecule does not have."""


@dataclass(frozen=True)
class AtomFeature:
    """One heavy atom: element symbol, implicit H count, formal charge."""

    el: str
    h: int = 0
    q: int = 0

    def __post_init__(self):
        if self.el not in ELEMENT_INDEX:
            raise MolError(f"unsupported element {self.el!r}")
        if not 0 <= self.h <= MAX_H:
            raise MolError(f"hydrogen count {self.h} outside 0..{MAX_H}")
        if not CHARGE_RANGE[0] <= self.q <= CHARGE_RANGE[1]:
            raise MolError(f"formal charge {self.q} outside {CHARGE_RANGE}")


@dataclass(frozen=True)
class MolGraph:
    """Immutable molecule.

    ``bonds`` is an n-by-n int matrix of BondType codes, symmetric with a
    zero diagonal.  ``coords`` is an optional (n, 3) float array in
    Angstroms.  Structural invariants are enforced here; chemical
    validity (valence, connectivity) is checked separately so that
    generated candidates can be represented, inspected and filtered.
    """

    atoms: tuple
    bonds: np.ndarray
    coords: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        n = len(atoms)
        bonds = np.asarray(self.bonds, dtype=np.int8)
        if bonds.shape != (n, n):
            raise MolError(f"bond matrix shape {bonds.shape} for {n} atoms")
        if not np.array_equal(bonds, bonds.T):
            raise MolError("bond matrix is not symmetric")
        if np.any(np.diag(bonds) != 0):
            raise MolError("self-bond on the diagonal")
        if bonds.min(initial=0) < 0 or bonds.max(initial=0) > max(BondType):
            raise MolError("bond code outside the BondType enumeration")
        bonds = bonds.copy()
        bonds.setflags(write=False)
        object.__setattr__(self, "bonds", bonds)
        if self.coords is not None:
            coords = np.asarray(self.coords, dtype=np.float64)
            if coords.shape != (n, 3):
                raise MolError(f"coords shape {coords.shape} for {n} atoms")
            if not np.all(np.isfinite(coords)):
                raise MolError("non-finite coordinates")
            coords = coords.copy()
            coords.setflags(write=False)
            object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.atoms)

    def with_coords(self, coords) -> "MolGraph":
        return MolGraph(self.atoms, self.bonds, coords, dict(self.meta))

    def bond_pairs(self):
        """Yield (i, j, BondType) for every bonded pair with i < j."""
        idx_i, idx_j = np.nonzero(np.triu(self.bonds))
        for i, j in zip(idx_i, idx_j):
            yield int(i), int(j), BondType(int(self.bonds[i, j]))

    def neighbors(self, i: int):
        return [int(j) for j in np.nonzero(self.bonds[i])[0]]


def heavy_atom_count(mol: MolGraph) -> int:
    return len(mol.atoms)


def connected(mol: MolGraph) -> bool:
    """True if every atom is reachable from atom 0 over any bond."""
    n = len(mol.atoms)
    if n <= 1:
        return True
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(mol.bonds[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def valence_ok(mol: MolGraph):
    """Check every atom's bond-order sum + H count against the table.

    Returns (ok, violations) where violations is a list of
    (atom_index, message).  Aromatic bonds count 1.5 each; when the sum
    lands on a half-integer both the floor and ceil are admitted, and
    atoms of N/O/S/P carrying exactly two aromatic bonds may also count
    them as singles (pyrrole-type centers contribute their lone pair to
    the ring rather than taking an extra bond).
    """
    violations = []
    for i, atom in enumerate(mol.atoms):
        allowed = VALENCE_TABLE.get((atom.el, atom.q))
        if allowed is None:
            violations.append((i, f"no valence state for {atom.el} charge {atom.q:+d}"))
            continue
        row = mol.bonds[i]
        n_arom = int(np.count_nonzero(row == BondType.AROMATIC))
        order = 0.0
        for code in row[row != BondType.NONE]:
            order += BOND_ORDER[BondType(int(code))]
        if order == int(order):
            candidates = {int(order)}
        else:
            candidates = {floor(order), ceil(order)}
        if atom.el in ("N", "O", "S", "P") and n_arom == 2:
            candidates.add(int(order - 0.5 * n_arom))
        if not any(c + atom.h in allowed for c in candidates):
            violations.append(
                (i, f"{atom.el}{atom.q:+d} total {sorted(candidates)}+{atom.h}H "
                    f"not in {allowed}"))
    return len(violations) == 0, violations


def center_coords(mol: MolGraph) -> MolGraph:
    """Translate the molecule so its coordinate centroid is the origin."""
    if mol.coords is None:
        raise GeometryError("molecule has no coordinates")
    return mol.with_coords(mol.coords - mol.coords.mean(axis=0))


def rotation_from_quaternion(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 3x3 proper rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    # A normalized Gaussian 4-vector is uniform on S^3, hence uniform
    # over rotations.
    q = rng.normal(size=4)
    while np.linalg.norm(q) < 1e-8:
        q = rng.normal(size=4)
    return rotation_from_quaternion(q)


def random_rotation(mol: MolGraph, seed) -> MolGraph:
    """Apply a uniformly random proper rotation to the coordinates."""
    if mol.coords is None:
        raise GeometryError("molecule has no coordinates")
    rot = random_rotation_matrix(np.random.default_rng(seed))
    return mol.with_coords(mol.coords @ rot.T)


def kabsch_rotation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Optimal rotation taking centered points p onto centered points q."""
    cov = p.T @ q
    u, _, vt = np.linalg.svd(cov)
    # Flip the smallest singular direction if the best orthogonal map is
    # a reflection: superposition must stay proper.
    d = np.sign(np.linalg.det(vt.T @ u.T))
    corr = np.diag([1.0, 1.0, d])
    return vt.T @ corr @ u.T


def aligned_rmsd(a: MolGraph, b: MolGraph) -> float:
    """RMSD between two conformers after optimal rigid superposition."""
    if a.coords is None or b.coords is None:
        raise GeometryError("both molecules need coordinates")
    if len(a.atoms) != len(b.atoms):
        raise MolError(f"atom count mismatch: {len(a.atoms)} vs {len(b.atoms)}")
    p = a.coords - a.coords.mean(axis=0)
    q = b.coords - b.coords.mean(axis=0)
    rot = kabsch_rotation(p, q)
    diff = p @ rot.T - q
    return float(np.sqrt((diff * diff).sum() / len(p)))


# -- molecule archive (JSON lines) -------------------------------------

def mol_to_record(mol: MolGraph) -> dict:
    rec = {
        "atoms": [{"el": a.el, "h": a.h, "q": a.q} for a in mol.atoms],
        "bonds": [[i, j, bt.name.lower()] for i, j, bt in mol.bond_pairs()],
    }
    if mol.coords is not None:
        rec["coords"] = [[float(v) for v in xyz] for xyz in mol.coords]
    if mol.meta:
        rec["meta"] = mol.meta
    return rec


def mol_from_record(rec: dict) -> MolGraph:
    atoms = tuple(AtomFeature(a["el"], a["h"], a["q"]) for a in rec["atoms"])
    n = len(atoms)
    bonds = np.zeros((n, n), dtype=np.int8)
    for i, j, name in rec["bonds"]:
        code = BondType[name.upper()]
        if code == BondType.NONE:
            raise MolError("explicit none bond in archive record")
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise MolError(f"bond endpoint ({i},{j}) out of range")
        bonds[i, j] = bonds[j, i] = code
    return MolGraph(atoms, bonds, rec.get("coords"), rec.get("meta", {}))


def write_molecules(path, mols) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mol in mols:
            fh.write(json.dumps(mol_to_record(mol)) + "\n")


def read_molecules(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(mol_from_record(json.loads(line)))
    return out
