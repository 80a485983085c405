"""Ring perception: smallest set of smallest rings via Horton's method.

Candidate cycles are built from BFS shortest-path trees (one per vertex
plus one closing edge), sorted by size, then greedily accepted when
linearly independent over GF(2) in edge-incidence space.  For a
connected graph the basis has |bonds| - |atoms| + 1 members.
"""

from __future__ import annotations

import numpy as np

from ..molgraph import BondType, MolGraph


def _bfs_paths(adj, src, n):
    """Parent pointers of a BFS tree rooted at src."""
    parent = [-1] * n
    depth = [-1] * n
    depth[src] = 0
    frontier = [src]
    while frontier:
        nxt = []
        for i in frontier:
            for j in adj[i]:
                if depth[j] < 0:
                    depth[j] = depth[i] + 1
                    parent[j] = i
                    nxt.append(j)
        frontier = nxt
    return parent, depth


def _path_to_root(parent, v):
    out = [v]
    while parent[v] >= 0:
        v = parent[v]
        out.append(v)
    return out


def sssr(mol: MolGraph) -> list:
    """Rings as tuples of atom indices in traversal order around the cycle."""
    n = len(mol.atoms)
    edges = [(i, j) for i, j, _ in mol.bond_pairs()]
    if not edges:
        return []
    adj = [mol.neighbors(i) for i in range(n)]
    edge_id = {e: k for k, e in enumerate(edges)}

    # Cycle space dimension: bonds - atoms + number of components.
    comp = _component_count(adj, n)
    needed = len(edges) - n + comp
    if needed <= 0:
        return []

    candidates = {}
    for v in range(n):
        parent, depth = _bfs_paths(adj, v, n)
        for (x, y) in edges:
            if depth[x] < 0 or depth[y] < 0:
                continue
            px = _path_to_root(parent, x)
            py = _path_to_root(parent, y)
            # Paths must meet only at the root for a simple cycle.
            if len(set(px) & set(py)) != 1:
                continue
            cycle_vertices = px[:-1] + py[::-1]
            cyc_edges = frozenset(
                _ekey(cycle_vertices[k], cycle_vertices[(k + 1) % len(cycle_vertices)])
                for k in range(len(cycle_vertices)))
            if len(cyc_edges) == len(cycle_vertices) and len(cyc_edges) >= 3:
                candidates.setdefault(cyc_edges, len(cyc_edges))

    chosen = []
    basis = []   # reduced GF(2) incidence vectors
    for cyc in sorted(candidates, key=lambda c: (len(c), sorted(edge_id[e] for e in c))):
        vec = np.zeros(len(edges), dtype=bool)
        for e in cyc:
            vec[edge_id[e]] = True
        red = vec.copy()
        for b in basis:
            pivot = np.argmax(b)
            if red[pivot]:
                red ^= b
        if red.any():
            basis.append(red)
            chosen.append(cyc)
            if len(chosen) == needed:
                break
    return [_walk_cycle(c) for c in chosen]


def _ekey(i, j):
    return (i, j) if i < j else (j, i)


def _component_count(adj, n):
    seen = [False] * n
    comps = 0
    for start in range(n):
        if seen[start]:
            continue
        comps += 1
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            for j in adj[i]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
    return comps


def _walk_cycle(cyc_edges) -> tuple:
    ring_adj = {}
    for i, j in cyc_edges:
        ring_adj.setdefault(i, []).append(j)
        ring_adj.setdefault(j, []).append(i)
    start = min(ring_adj)
    order = [start]
    prev = None
    while len(order) < len(ring_adj):
        nbrs = ring_adj[order[-1]]
        nxt = nbrs[0] if nbrs[0] != prev else nbrs[1]
        prev = order[-1]
        order.append(nxt)
    return tuple(order)


def ring_sizes(mol: MolGraph) -> list:
    return sorted(len(r) for r in sssr(mol))


def ring_size_histogram(mol: MolGraph) -> dict:
    """Ring-size counts over the SSSR basis; acyclic gives {}."""
    hist = {}
    for size in ring_sizes(mol):
        hist[size] = hist.get(size, 0) + 1
    return hist


def aromatic_rings(mol: MolGraph) -> list:
    """SSSR members whose every ring bond is aromatic."""
    out = []
    for ring in sssr(mol):
        k = len(ring)
        if all(mol.bonds[ring[a], ring[(a + 1) % k]] == BondType.AROMATIC
               for a in range(k)):
            out.append(ring)
    return out


def atoms_in_rings(mol: MolGraph) -> set:
    return {i for ring in sssr(mol) for i in ring}
