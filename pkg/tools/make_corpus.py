#!/usr/bin/env python3
"""Regenerate the bundled toy training corpus (deterministic).

Small drug-like molecules are assembled from ring scaffolds and short
substituents, so the set is dominated by five- and six-membered rings
the way the desk-scale experiments expect.  Every molecule must parse,
pass valence checks, stay within 20 heavy atoms, survive a canonical
round-trip and embed to a clash-free conformer before it is kept.

Usage: python3 tools/make_corpus.py  (writes src/mevo/data/toy_corpus.smi)
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mevo.chemio import EmbedError, SmilesError, embed_conformer, parse_smiles, write_smiles
from mevo.metrics.rings import ring_sizes
from mevo.molgraph import valence_ok

TARGET = 1000
MAX_ATOMS = 20
SEED = 20240917

# Slots: {0}/{1} filled with "(sub)" or dropped.
TEMPLATES = [
    # benzenes and azines
    ("c1cc{0}ccc1{1}", 30),
    ("c1cc{0}cnc1{1}", 12),
    ("n1cc{0}ccc1{1}", 8),
    ("c1cc{0}ncc1{1}", 8),
    # five-membered aromatics
    ("c1cc{0}oc1{1}", 10),
    ("c1cc{0}sc1{1}", 10),
    ("c1cc{0}[nH]c1{1}", 10),
    # saturated six-rings
    ("C1CC{0}CCC1{1}", 14),
    ("C1CC{0}NCC1{1}", 8),
    ("C1CC{0}OCC1{1}", 8),
    ("O=C1CC{0}CCC1{1}", 5),
    # saturated five-rings
    ("C1CC{0}CC1{1}", 10),
    ("C1CC{0}NC1{1}", 6),
    ("C1CC{0}OC1{1}", 6),
    ("O=C1CC{0}CC1{1}", 4),
    ("O=C1OC{0}CC1{1}", 3),
    ("O=C1NC{0}CC1{1}", 3),
    # fused bicyclics
    ("c1ccc2ccccc2c1{0}", 4),
    ("c1ccc2[nH]ccc2c1{0}", 3),
    ("C1Cc2ccccc2CC1{0}", 3),
    # a small acyclic minority
    ("CC{0}CO", 2), ("CC{0}CN", 2), ("CC(=O)OC{0}C", 2),
    ("CC(=O)NC{0}C", 2), ("CCC{0}CC", 2), ("OCC{0}CO", 1),
]

SUBSTITUENTS = [
    ("", 40), ("C", 14), ("CC", 8), ("CCC", 3), ("O", 6), ("OC", 4),
    ("N", 5), ("NC", 3), ("F", 4), ("Cl", 4), ("Br", 2), ("C=O", 2),
    ("C(=O)O", 3), ("C(=O)N", 2), ("C#N", 2), ("CO", 4), ("CN", 3),
    ("CCO", 2), ("S", 1), ("SC", 1), ("C(C)C", 2), ("C(F)(F)F", 1),
]


def weighted(rng, pairs):
    items = [x for x, _ in pairs]
    w = np.array([w for _, w in pairs], dtype=float)
    return items[rng.choice(len(items), p=w / w.sum())]


def main():
    rng = np.random.default_rng(SEED)
    seen = set()
    kept = []
    tries = 0
    while len(kept) < TARGET:
        tries += 1
        if tries > 200_000:
            raise SystemExit("generator stalled; template/substituent mix too narrow")
        template = weighted(rng, TEMPLATES)
        fills = []
        for _ in range(template.count("{")):
            sub = weighted(rng, SUBSTITUENTS)
            fills.append(f"({sub})" if sub else "")
        smiles = template.format(*fills)
        try:
            mol = parse_smiles(smiles)
        except SmilesError:
            continue
        if not (3 <= len(mol.atoms) <= MAX_ATOMS):
            continue
        ok, _ = valence_ok(mol)
        if not ok:
            continue
        canon = write_smiles(mol)
        if canon in seen:
            continue
        try:
            back = parse_smiles(canon)
        except SmilesError:
            continue
        if len(back.atoms) != len(mol.atoms):
            continue
        try:
            embed_conformer(mol, seed=len(kept))
        except EmbedError:
            continue
        seen.add(canon)
        kept.append(canon)
        if len(kept) % 100 == 0:
            print(f"{len(kept)} kept after {tries} tries")

    kept.sort()
    out = Path(__file__).resolve().parent.parent / "src" / "mevo" / "data" / "toy_corpus.smi"
    out.write_text("\n".join(kept) + "\n")

    sizes = [len(parse_smiles(s).atoms) for s in kept]
    ring_mols = 0
    small_ring_mols = 0
    for s in kept:
        rs = ring_sizes(parse_smiles(s))
        ring_mols += bool(rs)
        small_ring_mols += bool(rs) and all(r in (5, 6) for r in rs)
    print(f"wrote {len(kept)} molecules to {out}")
    print(f"heavy atoms: min {min(sizes)} max {max(sizes)} mean {np.mean(sizes):.1f}")
    print(f"with rings: {ring_mols}, all rings 5/6: {small_ring_mols}")


if __name__ == "__main__":
    main()
