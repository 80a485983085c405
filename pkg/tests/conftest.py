import numpy as np
import pytest

from mevo.molgraph import AtomFeature, BondType, MolGraph


def build_mol(atoms, bonds=(), coords=None, meta=None):
    """Construct a MolGraph from terse tuples.

    atoms: list of (el, h, q); bonds: list of (i, j, BondType).
    """
    feats = tuple(AtomFeature(*a) for a in atoms)
    n = len(feats)
    mat = np.zeros((n, n), dtype=np.int8)
    for i, j, bt in bonds:
        mat[i, j] = mat[j, i] = int(bt)
    return MolGraph(feats, mat, coords, meta or {})


@pytest.fixture
def ethanol():
    # CCO with implicit hydrogens
    return build_mol(
        [("C", 3, 0), ("C", 2, 0), ("O", 1, 0)],
        [(0, 1, BondType.SINGLE), (1, 2, BondType.SINGLE)],
    )


@pytest.fixture
def benzene():
    bonds = [(i, (i + 1) % 6, BondType.AROMATIC) for i in range(6)]
    return build_mol([("C", 1, 0)] * 6, bonds)
