"""Protein pocket input: fixed-column PDB ATOM records.

Only the 20 standard amino acids are kept; HETATM and everything else is
skipped.  Residues are grouped by (chain, residue number) and addressed
by residue number, which therefore must be unique across the file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STANDARD_RESIDUES = frozenset([
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
])


class PocketError(ValueError):
    """Malformed pocket structure input."""


@dataclass(frozen=True)
class ResidueAtom:
    name: str       # PDB atom name, e.g. "CA", "OD1"
    element: str
    xyz: tuple


@dataclass(frozen=True)
class Residue:
    name: str       # three-letter residue type
    seq: int        # residue number from the file
    chain: str
    atoms: tuple

    @property
    def label(self) -> str:
        """Identifier used in interaction records, e.g. ``ASP12``."""
        return f"{self.name}{self.seq}"

    def atom_coords(self) -> np.ndarray:
        return np.array([a.xyz for a in self.atoms], dtype=np.float64)

    def find_atom(self, name: str):
        for atom in self.atoms:
            if atom.name == name:
                return atom
        return None


@dataclass(frozen=True)
class PocketStructure:
    residues: tuple
    pocket_seqs: tuple

    def pocket_residues(self):
        chosen = set(self.pocket_seqs)
        return [r for r in self.residues if r.seq in chosen]

    def all_pocket_coords(self) -> np.ndarray:
        rows = [r.atom_coords() for r in self.pocket_residues()]
        return np.concatenate(rows, axis=0) if rows else np.zeros((0, 3))


def _element_from_columns(line: str, atom_name: str) -> str:
    el = line[76:78].strip() if len(line) >= 78 else ""
    if el:
        return el.capitalize()
    # Fall back to the atom-name convention: first alphabetic character
    # of the name field (column 13 is only used by two-letter elements).
    stripped = atom_name.strip()
    for ch in stripped:
        if ch.isalpha():
            return ch.upper()
    return ""


def parse_pocket(text: str, pocket_indices) -> PocketStructure:
    """Read ATOM records, group into residues, mark the pocket subset."""
    grouped: dict[tuple, list] = {}
    order: list[tuple] = []
    names: dict[tuple, str] = {}
    saw_atom = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith("ATOM"):
            continue
        saw_atom = True
        if len(line) < 54:
            raise PocketError(f"line {lineno}: ATOM record shorter than 54 columns")
        atom_name = line[12:16].strip()
        res_name = line[17:20].strip()
        chain = line[21:22].strip() or "A"
        try:
            seq = int(line[22:26])
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError as exc:
            raise PocketError(f"line {lineno}: bad numeric field: {exc}") from exc
        if not all(np.isfinite(xyz)):
            raise PocketError(f"line {lineno}: non-finite coordinate")
        if res_name not in STANDARD_RESIDUES:
            continue
        key = (chain, seq)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
            names[key] = res_name
        elif names[key] != res_name:
            raise PocketError(
                f"line {lineno}: residue {seq} renamed "
                f"{names[key]} -> {res_name}")
        element = _element_from_columns(line, line[12:16])
        if not element:
            raise PocketError(f"line {lineno}: cannot determine element")
        grouped[key].append(ResidueAtom(atom_name, element, xyz))

    if not saw_atom:
        raise PocketError("no ATOM records in input")
    if not grouped:
        raise PocketError("no standard amino-acid residues in input")

    seqs_seen = [seq for _, seq in order]
    if len(set(seqs_seen)) != len(seqs_seen):
        raise PocketError("residue numbers are not unique across chains")

    residues = tuple(
        Residue(names[key], key[1], key[0], tuple(grouped[key]))
        for key in order
    )
    available = {r.seq for r in residues}
    pocket = []
    for idx in pocket_indices:
        idx = int(idx)
        if idx not in available:
            raise PocketError(f"pocket residue {idx} not present in structure")
        pocket.append(idx)
    return PocketStructure(residues, tuple(pocket))


def residues_near(structure: PocketStructure, ref_coords, cutoff: float = 6.0):
    """Residue numbers with any atom within ``cutoff`` of the reference.

    Convenience for building a pocket list from a bound ligand pose.
    """
    ref = np.asarray(ref_coords, dtype=np.float64).reshape(-1, 3)
    out = []
    for res in structure.residues:
        d = np.linalg.norm(res.atom_coords()[:, None] - ref[None], axis=-1)
        if d.min() <= cutoff:
            out.append(res.seq)
    return out
