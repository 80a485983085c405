"""Circular substructure fingerprints and Tanimoto similarity.

Atom identifiers start from (element, charge, H count, degree) and are
refined over bonded neighbourhoods out to the chosen radius; every
identifier along the way sets one of the bits.  Neighbour lists are
sorted before hashing, so the result is identical for any atom ordering
of the same graph.  Hashing is FNV-1a with a fixed offset, never the
process-salted builtin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..molgraph import ELEMENT_INDEX, MolGraph

DEFAULT_BITS = 2048
DEFAULT_RADIUS = 2

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def _mix(values) -> int:
    h = _FNV_OFFSET
    for v in values:
        h ^= v & _MASK
        h = (h * _FNV_PRIME) & _MASK
    return h


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray   # (n_bits,) bool

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n_bits(self) -> int:
        return len(self.bits)

    def count(self) -> int:
        return int(self.bits.sum())


def fingerprint(mol: MolGraph, n_bits: int = DEFAULT_BITS,
                radius: int = DEFAULT_RADIUS) -> Fingerprint:
    if n_bits <= 0:
        raise ValueError("fingerprint length must be positive")
    n = len(mol.atoms)
    degree = [(mol.bonds[i] > 0).sum() for i in range(n)]
    ids = [_mix((ELEMENT_INDEX[a.el], a.q + 8, a.h, int(degree[i])))
           for i, a in enumerate(mol.atoms)]
    bits = np.zeros(n_bits, dtype=bool)
    for h in ids:
        bits[h % n_bits] = True
    for _ in range(radius):
        nxt = []
        for i in range(n):
            env = sorted((int(mol.bonds[i, j]), ids[j]) for j in mol.neighbors(i))
            nxt.append(_mix([ids[i]] + [v for pair in env for v in pair]))
        ids = nxt
        for h in ids:
            bits[h % n_bits] = True
    return Fingerprint(bits)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; two all-zero fingerprints count as identical."""
    if a.n_bits != b.n_bits:
        raise ValueError(f"fingerprint lengths differ: {a.n_bits} vs {b.n_bits}")
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return int((a.bits & b.bits).sum()) / union
