"""SMILES subset: parser and Morgan-ranked canonical writer.

Supported syntax: organic-subset atoms (B C N O P S F Cl Br I), aromatic
lowercase (b c n o p s), bracket atoms with explicit H count and formal
charge, bond symbols ``- = # :``, branches, ring closures (single digit
and %nn).  Stereo markers, isotopes, wildcards and multi-fragment input
(``.``) are rejected with the byte offset of the offending character.

Aromaticity is taken as written: lowercase atoms and ``:`` bonds map
straight onto the aromatic bond type with no perception pass.
"""

from __future__ import annotations

from math import ceil

import numpy as np

from ..molgraph import (
    ELEMENT_INDEX, AtomFeature, BondType, MolGraph, MolError, valence_ok,
)

ORGANIC_TWO = ("Cl", "Br")
ORGANIC_ONE = ("B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_ONE = ("b", "c", "n", "o", "p", "s")
DIGITS = "0123456789"

# Default valences used to infer implicit hydrogen counts on shorthand
# atoms.  Multi-valued entries are searched in ascending order.
DEFAULT_VALENCES = {
    "B": (3,), "C": (4,), "N": (3,), "O": (2,), "P": (3, 5),
    "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}

BOND_CHARS = {
    "-": BondType.SINGLE,
    "=": BondType.DOUBLE,
    "#": BondType.TRIPLE,
    ":": BondType.AROMATIC,
}
_ORDER = {BondType.SINGLE: 1.0, BondType.DOUBLE: 2.0,
          BondType.TRIPLE: 3.0, BondType.AROMATIC: 1.5}


class SmilesError(MolError):
    """Syntax or chemistry problem in a SMILES string, with byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class _Atom:
    __slots__ = ("el", "h", "q", "aromatic", "offset", "bonds")

    def __init__(self, el, h, q, aromatic, offset):
        self.el = el
        self.h = h              # None = infer from default valence
        self.q = q
        self.aromatic = aromatic
        self.offset = offset
        self.bonds = []         # (other_index, BondType)


def parse_smiles(text: str) -> MolGraph:
    if not text:
        raise SmilesError("empty input", 0)
    atoms: list[_Atom] = []
    bonds: dict[tuple, BondType] = {}
    stack: list[int] = []
    prev = None
    pending = None          # (BondType, offset) waiting for the next atom
    rings: dict[int, tuple] = {}   # number -> (atom, BondType|None, offset)

    def add_bond(i, j, bt, offset):
        if i == j:
            raise SmilesError("ring closure bonds an atom to itself", offset)
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise SmilesError("duplicate bond between atoms", offset)
        bonds[key] = bt
        atoms[i].bonds.append((j, bt))
        atoms[j].bonds.append((i, bt))

    def attach(idx, offset):
        nonlocal prev, pending
        if prev is not None:
            if pending is not None:
                bt, _ = pending
            elif atoms[prev].aromatic and atoms[idx].aromatic:
                bt = BondType.AROMATIC
            else:
                bt = BondType.SINGLE
            add_bond(prev, idx, bt, offset)
        elif pending is not None:
            raise SmilesError("bond symbol with no preceding atom", pending[1])
        pending = None
        prev = idx

    def ring_closure(number, offset):
        nonlocal pending
        if prev is None:
            raise SmilesError("ring closure before any atom", offset)
        want = pending[0] if pending is not None else None
        pending = None
        if number in rings:
            other, other_want, other_off = rings.pop(number)
            if want is not None and other_want is not None and want != other_want:
                raise SmilesError("ring closure bond symbols disagree", offset)
            bt = want if want is not None else other_want
            if bt is None:
                both_arom = atoms[other].aromatic and atoms[prev].aromatic
                bt = BondType.AROMATIC if both_arom else BondType.SINGLE
            add_bond(other, prev, bt, offset)
        else:
            rings[number] = (prev, want, offset)

    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "(":
            if prev is None:
                raise SmilesError("branch before any atom", i)
            stack.append(prev)
            i += 1
        elif ch == ")":
            if not stack:
                raise SmilesError("unbalanced ')'", i)
            if pending is not None:
                raise SmilesError("bond symbol before ')'", pending[1])
            prev = stack.pop()
            i += 1
        elif ch in BOND_CHARS:
            if pending is not None:
                raise SmilesError("two bond symbols in a row", i)
            pending = (BOND_CHARS[ch], i)
            i += 1
        elif ch in DIGITS:
            ring_closure(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not (text[i + 1] in DIGITS and text[i + 2] in DIGITS):
                raise SmilesError("'%' needs two digits", i)
            ring_closure(int(text[i + 1 : i + 3]), i)
            i += 3
        elif ch == "[":
            atom, i = _parse_bracket(text, i)
            atoms.append(atom)
            attach(len(atoms) - 1, atom.offset)
        elif text[i : i + 2] in ORGANIC_TWO:
            atoms.append(_Atom(text[i : i + 2], None, 0, False, i))
            attach(len(atoms) - 1, i)
            i += 2
        elif ch in ORGANIC_ONE:
            atoms.append(_Atom(ch, None, 0, False, i))
            attach(len(atoms) - 1, i)
            i += 1
        elif ch in AROMATIC_ONE:
            atoms.append(_Atom(ch.upper(), None, 0, True, i))
            attach(len(atoms) - 1, i)
            i += 1
        elif ch == ".":
            raise SmilesError("multi-fragment input not supported", i)
        else:
            raise SmilesError(f"unsupported character {ch!r}", i)

    if stack:
        raise SmilesError("unbalanced '('", len(text))
    if pending is not None:
        raise SmilesError("dangling bond symbol", pending[1])
    if rings:
        number, (_, _, offset) = next(iter(rings.items()))
        raise SmilesError(f"unmatched ring closure {number}", offset)
    if not atoms:
        raise SmilesError("no atoms", 0)

    return _finish(atoms, bonds)


def _parse_bracket(text, start):
    i = start + 1
    n = len(text)

    def need(cond, msg, off):
        if not cond:
            raise SmilesError(msg, off)

    need(i < n, "unterminated bracket atom", start)
    aromatic = False
    c0 = text[i]
    c1 = text[i + 1] if i + 1 < n else ""
    if "A" <= c0 <= "Z":
        # A lowercase letter straight after an uppercase one belongs to
        # the element symbol ([Cl-], but also [Si] -> clean rejection).
        if "a" <= c1 <= "z":
            sym = c0 + c1
            if sym not in ORGANIC_TWO:
                raise SmilesError(f"unsupported element {sym!r}", i)
            el, i = sym, i + 2
        elif c0 in ORGANIC_ONE:
            el, i = c0, i + 1
        else:
            raise SmilesError(f"unsupported element {c0!r}", i)
    elif "a" <= c0 <= "z":
        if "a" <= c1 <= "z":
            raise SmilesError(f"unsupported element {c0 + c1!r}", i)
        if c0 not in AROMATIC_ONE:
            raise SmilesError(f"unsupported element {c0!r}", i)
        el, i, aromatic = c0.upper(), i + 1, True
    else:
        raise SmilesError("unsupported element in brackets", i)

    h = 0
    if i < n and text[i] == "H":
        i += 1
        h = 1
        digits = ""
        while i < n and text[i] in DIGITS:
            digits += text[i]
            i += 1
        if digits:
            h = int(digits)

    q = 0
    if i < n and text[i] in "+-":
        sign = 1 if text[i] == "+" else -1
        symbol = text[i]
        i += 1
        if i < n and text[i] in DIGITS:
            q = sign * int(text[i])
            i += 1
        else:
            q = sign
            while i < n and text[i] == symbol:
                q += sign
                i += 1

    need(i < n and text[i] == "]", "unterminated bracket atom", start)
    try:
        AtomFeature(el, h, q)
    except MolError as exc:
        raise SmilesError(str(exc), start) from exc
    return _Atom(el, h, q, aromatic, start), i + 1


def _finish(atoms, bonds):
    feats = []
    for atom in atoms:
        h = atom.h
        if h is None:
            total = sum(_ORDER[bt] for _, bt in atom.bonds)
            target = ceil(total)
            options = DEFAULT_VALENCES[atom.el]
            if atom.aromatic:
                h = max(0, options[0] - target)
            else:
                h = next((d - target for d in options if d >= target), 0)
        try:
            feats.append(AtomFeature(atom.el, h, atom.q))
        except MolError as exc:
            raise SmilesError(str(exc), atom.offset) from exc

    n = len(atoms)
    mat = np.zeros((n, n), dtype=np.int8)
    for (i, j), bt in bonds.items():
        mat[i, j] = mat[j, i] = int(bt)
    mol = MolGraph(tuple(feats), mat)
    ok, violations = valence_ok(mol)
    if not ok:
        idx, msg = violations[0]
        raise SmilesError(f"valence violation: {msg}", atoms[idx].offset)
    return mol


# -- writer ------------------------------------------------------------

def _aromatic_flags(mol: MolGraph):
    counts = (np.asarray(mol.bonds) == int(BondType.AROMATIC)).sum(axis=1)
    return counts >= 2


def morgan_ranks(mol: MolGraph) -> list:
    """Iterative neighbourhood refinement; equal ranks = symmetric atoms."""
    arom = _aromatic_flags(mol)
    seeds = []
    for i, atom in enumerate(mol.atoms):
        row = mol.bonds[i]
        degree = int(np.count_nonzero(row))
        order2 = int(sum(2 * _ORDER[BondType(int(c))] for c in row[row != 0]))
        seeds.append((degree, ELEMENT_INDEX[atom.el], atom.q, atom.h,
                      bool(arom[i]), order2))
    ranks = _rank(seeds)
    distinct = len(set(ranks))
    while True:
        keys = []
        for i in range(len(mol.atoms)):
            nb = sorted((ranks[j], int(mol.bonds[i, j]))
                        for j in np.nonzero(mol.bonds[i])[0])
            keys.append((ranks[i], tuple(nb)))
        ranks = _rank(keys)
        now = len(set(ranks))
        if now == distinct:
            return ranks
        distinct = now


def _rank(keys):
    order = sorted(set(keys))
    index = {k: r for r, k in enumerate(order)}
    return [index[k] for k in keys]


def write_smiles(mol: MolGraph) -> str:
    """Serialize with Morgan-rank-ordered traversal (idempotent output)."""
    n = len(mol.atoms)
    if n == 0:
        raise MolError("cannot write an empty molecule")
    ranks = morgan_ranks(mol)
    arom = _aromatic_flags(mol)

    # DFS from the lowest-ranked atom, neighbours in rank order; back
    # edges become numbered ring closures.
    start = min(range(n), key=lambda i: (ranks[i], i))
    visited = [False] * n
    closures = {}        # (i, j) sorted -> number
    ring_num = [0]
    free_numbers = []
    pieces = []

    def closure_number():
        if free_numbers:
            return free_numbers.pop()
        ring_num[0] += 1
        if ring_num[0] > 99:
            raise MolError("more than 99 simultaneous ring closures")
        return ring_num[0]

    def bond_symbol(i, j, bt):
        if bt == BondType.SINGLE:
            return "-" if (arom[i] and arom[j]) else ""
        if bt == BondType.AROMATIC:
            return "" if (arom[i] and arom[j]) else ":"
        return "=" if bt == BondType.DOUBLE else "#"

    def atom_token(i):
        atom = mol.atoms[i]
        symbol = atom.el.lower() if arom[i] else atom.el
        if atom.q == 0 and _shorthand_h(mol, i, arom[i]) == atom.h:
            return symbol
        hpart = "" if atom.h == 0 else ("H" if atom.h == 1 else f"H{atom.h}")
        if atom.q == 0:
            qpart = ""
        elif abs(atom.q) == 1:
            qpart = "+" if atom.q > 0 else "-"
        else:
            qpart = f"+{atom.q}" if atom.q > 0 else str(atom.q)
        return f"[{symbol}{hpart}{qpart}]"

    # Pre-plan the spanning tree so ring bonds are known before writing.
    parent = {start: None}
    tree_children = {i: [] for i in range(n)}
    back_edges = []
    stack = [start]
    seen = {start}
    while stack:
        i = stack.pop()
        for j in sorted(np.nonzero(mol.bonds[i])[0],
                        key=lambda j: (ranks[j], int(j)), reverse=True):
            j = int(j)
            if j not in seen:
                seen.add(j)
                parent[j] = i
                tree_children[i].append(j)
                stack.append(j)
            elif parent.get(i) != j and (min(i, j), max(i, j)) not in closures:
                closures[(min(i, j), max(i, j))] = None
                back_edges.append((min(i, j), max(i, j)))
    if len(seen) != n:
        raise MolError("disconnected molecule cannot be written")
    for i in tree_children:
        tree_children[i].sort(key=lambda j: (ranks[j], j))

    ring_partners = {i: [] for i in range(n)}
    for i, j in back_edges:
        ring_partners[i].append(j)
        ring_partners[j].append(i)
    open_numbers = {}

    # Iterative emission (chains can be deeper than the recursion limit).
    todo = [("atom", start)]
    while todo:
        kind, val = todo.pop()
        if kind == "text":
            pieces.append(val)
            continue
        i = val
        pieces.append(atom_token(i))
        for j in sorted(ring_partners[i], key=lambda j: (ranks[j], j)):
            key = (min(i, j), max(i, j))
            if key in open_numbers:
                number = open_numbers.pop(key)
                free_numbers.append(number)
            else:
                number = closure_number()
                open_numbers[key] = number
            bt = BondType(int(mol.bonds[i, j]))
            tag = str(number) if number < 10 else f"%{number:02d}"
            pieces.append(bond_symbol(i, j, bt) + tag)
        kids = tree_children[i]
        frames = []
        for k, j in enumerate(kids):
            body = bond_symbol(i, j, BondType(int(mol.bonds[i, j])))
            if k < len(kids) - 1:
                frames.append(("text", "(" + body))
                frames.append(("atom", j))
                frames.append(("text", ")"))
            else:
                frames.append(("text", body))
                frames.append(("atom", j))
        todo.extend(reversed(frames))
    return "".join(pieces)


def _shorthand_h(mol: MolGraph, i: int, aromatic: bool) -> int:
    """H count a bare (non-bracket) atom symbol would re-parse to."""
    row = mol.bonds[i]
    total = sum(_ORDER[BondType(int(c))] for c in row[row != 0])
    target = ceil(total)
    options = DEFAULT_VALENCES[mol.atoms[i].el]
    if aromatic:
        return max(0, options[0] - target)
    return next((d - target for d in options if d >= target), 0)


def read_smiles_file(path):
    """Yield (MolGraph, name) from a SMILES-per-line file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            name = parts[1].strip() if len(parts) > 1 else ""
            yield parse_smiles(parts[0]), name
