"""Geometric protein-ligand interaction detection and the fulfillment ratio.

Four interaction types are detected from a relaxed pose:
  hydrogen_bond        donor heavy atom to acceptor <= 3.5 A, with the
                       donor-acceptor-antecedent angle >= 90 deg for every
                       heavy neighbour of the acceptor
  salt_bridge          opposite formal charges <= 4.0 A
  hydrophobic_contact  apolar carbon pairs <= 4.5 A
  pi_stack             aromatic ring centroids <= 5.5 A with plane angle
                       <= 30 deg (parallel) or >= 60 deg (T-shaped)

Each geometric hit is one record, so a residue can accumulate several
records of the same type -- profile counting depends on that.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..molgraph import MolGraph

INTERACTION_TYPES = ("hydrogen_bond", "salt_bridge", "hydrophobic_contact", "pi_stack")

HBOND_MAX = 3.5
HBOND_MIN_ANGLE = 90.0
SALT_MAX = 4.0
HYDROPHOBIC_MAX = 4.5
PI_CENTROID_MAX = 5.5
PI_PARALLEL_MAX = 30.0
PI_TSHAPE_MIN = 60.0

# Protein atom roles by (residue, atom name); backbone entries apply to
# every residue type.
_BACKBONE_DONORS = ("N",)
_BACKBONE_ACCEPTORS = ("O", "OXT")
_SIDE_DONORS = {
    "SER": ("OG",), "THR": ("OG1",), "TYR": ("OH",), "CYS": ("SG",),
    "ASN": ("ND2",), "GLN": ("NE2",), "HIS": ("ND1", "NE2"),
    "TRP": ("NE1",), "ARG": ("NE", "NH1", "NH2"), "LYS": ("NZ",),
}
_SIDE_ACCEPTORS = {
    "ASP": ("OD1", "OD2"), "GLU": ("OE1", "OE2"), "ASN": ("OD1",),
    "GLN": ("OE1",), "SER": ("OG",), "THR": ("OG1",), "TYR": ("OH",),
    "HIS": ("ND1", "NE2"), "MET": ("SD",),
}
_CATIONIC = {"LYS": ("NZ",), "ARG": ("NH1", "NH2", "NE")}
_ANIONIC = {"ASP": ("OD1", "OD2"), "GLU": ("OE1", "OE2")}
_HYDROPHOBIC = {
    "ALA": ("CB",), "VAL": ("CB", "CG1", "CG2"),
    "LEU": ("CB", "CG", "CD1", "CD2"), "ILE": ("CB", "CG1", "CG2", "CD1"),
    "MET": ("CB", "CG", "CE"), "PRO": ("CB", "CG", "CD"),
    "PHE": ("CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ"),
    "TRP": ("CB", "CG", "CD1", "CD2", "CE2", "CE3", "CZ2", "CZ3", "CH2"),
    "TYR": ("CB", "CG", "CD1", "CD2", "CE1", "CE2"),
    "LYS": ("CB", "CG", "CD"), "ARG": ("CB", "CG"),
    "GLU": ("CB", "CG"), "GLN": ("CB", "CG"),
    "ASP": ("CB",), "ASN": ("CB",), "THR": ("CG2",), "CYS": ("CB",),
}
_RINGS = {
    "PHE": (("CG", "CD1", "CE1", "CZ", "CE2", "CD2"),),
    "TYR": (("CG", "CD1", "CE1", "CZ", "CE2", "CD2"),),
    "HIS": (("CG", "ND1", "CE1", "NE2", "CD2"),),
    "TRP": (("CG", "CD1", "NE1", "CE2", "CD2"),
            ("CD2", "CE2", "CZ2", "CH2", "CZ3", "CE3")),
}
_COVALENT_GUESS = 1.8   # A; same-residue atoms closer than this are bonded


class SpecError(ValueError):
    """Bad interaction requirement list."""


@dataclass(frozen=True)
class InteractionRecord:
    kind: str
    residue: str
    ligand_atoms: tuple
    distance: float
    angle: float | None = None

    def key(self):
        return (self.kind, self.residue)


def load_interaction_spec(source) -> tuple:
    """Required (type, residue) pairs from JSON or an in-memory list."""
    if isinstance(source, (str, bytes)):
        data = json.loads(source)
    else:
        data = list(source)
    out = []
    for entry in data:
        if isinstance(entry, dict):
            kind, residue = entry.get("type"), entry.get("residue")
        else:
            kind, residue = entry
        if kind not in INTERACTION_TYPES:
            raise SpecError(f"unknown interaction type {kind!r}")
        if not residue or not isinstance(residue, str):
            raise SpecError(f"bad residue identifier {residue!r}")
        out.append((kind, residue))
    return tuple(out)


def validate_spec_residues(spec, residues) -> None:
    labels = {r.label for r in residues}
    for _, residue in spec:
        if residue not in labels:
            raise SpecError(f"required residue {residue} not in pocket")


def interaction_ratio(detected, spec) -> float:
    """Fraction of required (type, residue) pairs matched at least once."""
    if not spec:
        return 1.0
    seen = {rec.key() for rec in detected}
    hit = sum(1 for want in spec if tuple(want) in seen)
    return hit / len(spec)


def _ligand_roles(mol: MolGraph):
    donors, acceptors, cations, anions, greasy = [], [], [], [], []
    for i, atom in enumerate(mol.atoms):
        if atom.el in ("N", "O"):
            if atom.h >= 1:
                donors.append(i)
            if atom.q <= 0:
                acceptors.append(i)
        if atom.q > 0:
            cations.append(i)
        elif atom.q < 0:
            anions.append(i)
        if atom.el == "C" and all(
                mol.atoms[j].el not in ("N", "O", "S", "P")
                for j in mol.neighbors(i)):
            greasy.append(i)
    return donors, acceptors, cations, anions, greasy


def _ring_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    return centroid, vt[2]


def _plane_angle(n1, n2) -> float:
    cos = abs(float(np.dot(n1, n2)))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def _angle_deg(a, b, c) -> float:
    """Angle at vertex b."""
    u, v = a - b, c - b
    cos = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v) + 1e-12))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def _protein_antecedents(res, atom):
    pos = np.array(atom.xyz)
    out = []
    for other in res.atoms:
        if other is atom:
            continue
        if np.linalg.norm(np.array(other.xyz) - pos) <= _COVALENT_GUESS:
            out.append(np.array(other.xyz))
    return out


def detect_interactions(residues, mol: MolGraph, pose=None) -> list:
    """All geometric interaction records between pocket residues and a pose."""
    coords = np.asarray(pose if pose is not None else mol.coords, dtype=np.float64)
    if coords is None or not np.all(np.isfinite(coords)):
        raise ValueError("pose coordinates must be finite")
    donors, acceptors, cations, anions, greasy = _ligand_roles(mol)
    records = []

    from ..metrics.rings import aromatic_rings   # lazy: avoids module cycle
    lig_rings = aromatic_rings(mol)
    lig_planes = [(_ring_plane(coords[list(ring)]), ring) for ring in lig_rings]

    for res in residues:
        label = res.label
        res_xyz = {a.name: np.array(a.xyz) for a in res.atoms}

        donors_p = [a for a in res.atoms
                    if a.name in _BACKBONE_DONORS
                    or a.name in _SIDE_DONORS.get(res.name, ())]
        acceptors_p = [a for a in res.atoms
                       if a.name in _BACKBONE_ACCEPTORS
                       or a.name in _SIDE_ACCEPTORS.get(res.name, ())]

        # ligand donor -> protein acceptor
        for i in donors:
            for pa in acceptors_p:
                apos = np.array(pa.xyz)
                dist = float(np.linalg.norm(coords[i] - apos))
                if dist > HBOND_MAX:
                    continue
                angles = [_angle_deg(coords[i], apos, ante)
                          for ante in _protein_antecedents(res, pa)]
                if angles and min(angles) < HBOND_MIN_ANGLE:
                    continue
                records.append(InteractionRecord(
                    "hydrogen_bond", label, (i,), dist,
                    min(angles) if angles else None))

        # protein donor -> ligand acceptor
        for pa in donors_p:
            dpos = np.array(pa.xyz)
            for i in acceptors:
                dist = float(np.linalg.norm(dpos - coords[i]))
                if dist > HBOND_MAX:
                    continue
                angles = [_angle_deg(dpos, coords[i], coords[j])
                          for j in mol.neighbors(i)]
                if angles and min(angles) < HBOND_MIN_ANGLE:
                    continue
                records.append(InteractionRecord(
                    "hydrogen_bond", label, (i,), dist,
                    min(angles) if angles else None))

        # salt bridges: closest opposite-charge contact per ligand atom
        charged_p = ([(n, +1) for n in _CATIONIC.get(res.name, ())]
                     + [(n, -1) for n in _ANIONIC.get(res.name, ())])
        for i, sign in [(i, +1) for i in cations] + [(i, -1) for i in anions]:
            best = None
            for name, psign in charged_p:
                if name not in res_xyz or psign == sign:
                    continue
                dist = float(np.linalg.norm(coords[i] - res_xyz[name]))
                if dist <= SALT_MAX and (best is None or dist < best):
                    best = dist
            if best is not None:
                records.append(InteractionRecord("salt_bridge", label, (i,), best))

        # hydrophobic contacts: closest apolar carbon per ligand atom
        greasy_p = [res_xyz[n] for n in _HYDROPHOBIC.get(res.name, ())
                    if n in res_xyz]
        for i in greasy:
            best = None
            for ppos in greasy_p:
                dist = float(np.linalg.norm(coords[i] - ppos))
                if dist <= HYDROPHOBIC_MAX and (best is None or dist < best):
                    best = dist
            if best is not None:
                records.append(InteractionRecord(
                    "hydrophobic_contact", label, (i,), best))

        # aromatic stacking
        for names in _RINGS.get(res.name, ()):
            if not all(n in res_xyz for n in names):
                continue
            pc, pn = _ring_plane(np.array([res_xyz[n] for n in names]))
            for (lc, ln), ring in lig_planes:
                dist = float(np.linalg.norm(lc - pc))
                if dist > PI_CENTROID_MAX:
                    continue
                ang = _plane_angle(ln, pn)
                if ang <= PI_PARALLEL_MAX or ang >= PI_TSHAPE_MIN:
                    records.append(InteractionRecord(
                        "pi_stack", label, tuple(ring), dist, ang))

    return records
