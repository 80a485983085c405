"""Per-molecule descriptors: weight, H-bond counts, logP, rule of five."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from ..molgraph import MASSES, BondType, MolGraph

_DATA = Path(__file__).resolve().parent.parent / "data"


class UntypedAtomWarning(UserWarning):
    """An atom had no entry in the logP typing table."""


def molecular_weight(mol: MolGraph) -> float:
    """Formula weight in Daltons: heavy atoms plus implicit hydrogens."""
    total = sum(MASSES[a.el] for a in mol.atoms)
    total += MASSES["H"] * sum(a.h for a in mol.atoms)
    return total


def hydrogen_bond_donors(mol: MolGraph) -> int:
    """Hydrogens attached to nitrogen or oxygen."""
    return sum(a.h for a in mol.atoms if a.el in ("N", "O"))


def hydrogen_bond_acceptors(mol: MolGraph) -> int:
    """Nitrogen and oxygen atom count."""
    return sum(1 for a in mol.atoms if a.el in ("N", "O"))


# -- logP --------------------------------------------------------------

_TABLE_CACHE = None


def load_logp_table() -> dict:
    global _TABLE_CACHE
    if _TABLE_CACHE is None:
        _TABLE_CACHE = json.loads((_DATA / "logp_fragments.json").read_text())
    return _TABLE_CACHE


def _aromatic_atoms(mol: MolGraph):
    counts = (mol.bonds == BondType.AROMATIC).sum(axis=1)
    return counts >= 2


def atom_logp_type(mol: MolGraph, i: int, aromatic) -> str:
    """Type name: element, plus .ar when aromatic, plus .x when any
    neighbour is a non-carbon heavy atom."""
    name = mol.atoms[i].el
    if aromatic[i]:
        name += ".ar"
    if any(mol.atoms[j].el != "C" for j in mol.neighbors(i)):
        name += ".x"
    return name


def crippen_logp(mol: MolGraph, table: dict | None = None) -> float:
    """Additive atomic-contribution octanol-water partition estimate.

    Every heavy atom contributes one value from the typing table; atoms
    whose type is missing fall back to a per-element default with a
    warning.  Suitable for ordering and distribution comparisons, not
    for parity with any published parameterization.
    """
    if table is None:
        table = load_logp_table()
    types = table["types"]
    defaults = table.get("element_defaults", {})
    aromatic = _aromatic_atoms(mol)
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        name = atom_logp_type(mol, i, aromatic)
        if name in types:
            total += types[name]
        elif name.endswith(".x") and name[:-2] in types:
            # tables may carry no neighbour split for this element
            total += types[name[:-2]]
        else:
            warnings.warn(f"atom {i} ({name}) not in logP table "
                          f"{table.get('version', '?')}; using element default",
                          UntypedAtomWarning)
            total += defaults.get(atom.el, 0.0)
    return total


# -- rule of five ------------------------------------------------------

MW_LIMIT = 500.0
HBD_LIMIT = 5
HBA_LIMIT = 10
LOGP_LIMIT = 5.0


@dataclass(frozen=True)
class LipinskiResult:
    """Component values, per-rule compliance flags and the overall call
    (at most one violated rule)."""

    mw: float
    hbd: int
    hba: int
    logp: float
    mw_ok: bool
    hbd_ok: bool
    hba_ok: bool
    logp_ok: bool

    @property
    def violations(self) -> int:
        return sum(not flag for flag in
                   (self.mw_ok, self.hbd_ok, self.hba_ok, self.logp_ok))

    @property
    def passed(self) -> bool:
        return self.violations <= 1


def lipinski(mol: MolGraph) -> LipinskiResult:
    mw = molecular_weight(mol)
    hbd = hydrogen_bond_donors(mol)
    hba = hydrogen_bond_acceptors(mol)
    logp = crippen_logp(mol)
    return LipinskiResult(mw, hbd, hba, logp,
                          mw <= MW_LIMIT, hbd <= HBD_LIMIT,
                          hba <= HBA_LIMIT, logp <= LOGP_LIMIT)
