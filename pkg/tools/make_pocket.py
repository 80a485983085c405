#!/usr/bin/env python3
"""Regenerate the bundled synthetic pocket (deterministic).

Twelve residues are arranged as a cradle around the origin: backbone
atoms sit on an 8 A ring at alternating heights, side chains point
inward with their functional tips near 4.6 A so a centered ligand can
reach hydrogen-bond, hydrophobic, salt-bridge and stacking geometry.

Usage: python3 tools/make_pocket.py  (writes src/mevo/data/toy_pocket.pdb)
"""

from pathlib import Path

import numpy as np

BACKBONE_R = 8.0
TIP_R = 4.6
RING_R = 1.39   # aromatic C-C

# residue type and the inward chain of side-chain atoms (name, element,
# fractional position along backbone->tip); rings handled separately
RESIDUES = [
    ("SER", [("CB", "C", 0.45), ("OG", "O", 1.0)]),
    ("ASP", [("CB", "C", 0.35), ("CG", "C", 0.7), ("OD1", "O", 1.0, +0.6),
             ("OD2", "O", 1.0, -0.6)]),
    ("PHE", "ring"),
    ("LEU", [("CB", "C", 0.3), ("CG", "C", 0.65), ("CD1", "C", 1.0, +0.65),
             ("CD2", "C", 1.0, -0.65)]),
    ("TYR", "ring"),
    ("VAL", [("CB", "C", 0.45), ("CG1", "C", 1.0, +0.65), ("CG2", "C", 1.0, -0.65)]),
    ("ALA", [("CB", "C", 1.0)]),
    ("THR", [("CB", "C", 0.45), ("OG1", "O", 1.0, +0.6), ("CG2", "C", 1.0, -0.6)]),
    ("ASN", [("CB", "C", 0.35), ("CG", "C", 0.7), ("OD1", "O", 1.0, +0.6),
             ("ND2", "N", 1.0, -0.6)]),
    ("ILE", [("CB", "C", 0.3), ("CG1", "C", 0.65), ("CG2", "C", 0.6, -0.8),
             ("CD1", "C", 1.0)]),
    ("GLY", []),
    ("LYS", [("CB", "C", 0.25), ("CG", "C", 0.5), ("CD", "C", 0.7),
             ("CE", "C", 0.85), ("NZ", "N", 1.0)]),
]


def pdb_line(serial, name, res, seq, xyz, element):
    x, y, z = xyz
    return (f"ATOM  {serial:5d} {name:<4s} {res:>3s} A{seq:4d}    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          "
            f"{element:>2s}")


def main():
    lines = ["REMARK synthetic 12-residue cradle pocket, ligand site at origin"]
    serial = 1
    n = len(RESIDUES)
    for k, (res, side) in enumerate(RESIDUES):
        theta = 2.0 * np.pi * k / n
        u = np.array([np.cos(theta), np.sin(theta), 0.0])     # outward
        tang = np.array([-np.sin(theta), np.cos(theta), 0.0])
        z = 1.6 if k % 2 == 0 else -1.6
        ca = BACKBONE_R * u + np.array([0.0, 0.0, z])
        atoms = [
            ("N", "N", ca - 1.46 * tang),
            ("CA", "C", ca),
            ("C", "C", ca + 1.52 * tang),
            ("O", "O", ca + 1.52 * tang + np.array([0.0, 0.0, 1.23])),
        ]
        if side == "ring":
            # six-membered ring standing in the u-z plane; TYR sits further
            # out so its hydroxyl tip stays clear of the ligand site
            ring_dist = 6.1 if res == "TYR" else 5.3
            centroid = ring_dist * u + np.array([0.0, 0.0, z * 0.4])
            ring_names = ("CG", "CD1", "CE1", "CZ", "CE2", "CD2")
            for m, name in enumerate(ring_names):
                phi = 2.0 * np.pi * m / 6.0
                pos = centroid + RING_R * (np.cos(phi) * u
                                           + np.sin(phi) * np.array([0, 0, 1.0]))
                atoms.append((name, "C", pos))
            cb = 6.9 * u + np.array([0.0, 0.0, z * 0.7])
            atoms.insert(4, ("CB", "C", cb))
            if res == "TYR":
                atoms.append(("OH", "O", centroid - (RING_R + 1.36) * u))
        else:
            tip = TIP_R * u + np.array([0.0, 0.0, z * 0.3])
            base = ca
            for entry in side:
                name, el, frac = entry[0], entry[1], entry[2]
                off = entry[3] if len(entry) > 3 else 0.0
                pos = base + frac * (tip - base) + off * tang
                atoms.append((name, el, pos))
        for name, el, pos in atoms:
            lines.append(pdb_line(serial, name, res, k + 1, tuple(pos), el))
            serial += 1
    lines.append("END")
    out = Path(__file__).resolve().parent.parent / "src" / "mevo" / "data" / "toy_pocket.pdb"
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {serial - 1} atoms, {n} residues to {out}")


if __name__ == "__main__":
    main()
