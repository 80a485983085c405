"""Pharmacophore extraction and condition-sequence assembly.

Six feature kinds (HBD, HBA, aromatic, hydrophobic, cation, anion) are
read off the molecular graph with a fixed rule table; pocket residues
are summarized as residue type + C-alpha + side-chain centroid.  Both
streams are embedded (type table + coordinate MLP) and stacked into the
condition sequence the denoiser attends over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .chemio.pocket import STANDARD_RESIDUES, PocketStructure
from .metrics.rings import aromatic_rings
from .molgraph import GeometryError, MolGraph
from .nn import Params, Tensor, concat, embedding, embedding_init, mlp_forward, mlp_init

FEATURE_KINDS = ("HBD", "HBA", "aromatic", "hydrophobic", "cation", "anion")
KIND_INDEX = {k: i for i, k in enumerate(FEATURE_KINDS)}
RESIDUE_TYPES = tuple(sorted(STANDARD_RESIDUES))
RESIDUE_TYPE_INDEX = {r: i for i, r in enumerate(RESIDUE_TYPES)}

BACKBONE_ATOMS = frozenset(["N", "CA", "C", "O", "OXT"])
HYDROPHOBIC_MERGE_RADIUS = 2.0


@dataclass(frozen=True)
class PharmacophoreFeature:
    kind: str
    center: tuple
    source_atoms: tuple = ()

    def __post_init__(self):
        if self.kind not in KIND_INDEX:
            raise ValueError(f"unknown pharmacophore kind {self.kind!r}")
        center = tuple(float(v) for v in self.center)
        if len(center) != 3 or not all(np.isfinite(center)):
            raise ValueError(f"bad feature center {self.center!r}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "source_atoms", tuple(self.source_atoms))


@dataclass(frozen=True)
class PocketFeature:
    residue_type: str
    seq: int
    ca: tuple
    sidechain: tuple
    has_sidechain: bool


@dataclass(frozen=True)
class ConditionSet:
    pharmacophores: tuple = ()
    pocket: tuple = ()          # PocketFeature list

    def __len__(self):
        return len(self.pharmacophores) + len(self.pocket)


def extract_pharmacophores(mol: MolGraph) -> list:
    """Rule-table features; deterministic and order-independent."""
    if mol.coords is None:
        raise GeometryError("pharmacophore extraction needs coordinates")
    coords = mol.coords
    feats = []
    arom_ring_list = aromatic_rings(mol)
    aromatic_atoms = {i for ring in arom_ring_list for i in ring}

    for i, atom in enumerate(mol.atoms):
        pos = tuple(coords[i])
        if atom.el in ("N", "O") and atom.h >= 1:
            feats.append(PharmacophoreFeature("HBD", pos, (i,)))
        if atom.el in ("N", "O") and atom.q <= 0:
            # aromatic N with three connections has no free lone pair
            blocked = (atom.el == "N" and i in aromatic_atoms
                       and len(mol.neighbors(i)) + atom.h >= 3)
            if not blocked:
                feats.append(PharmacophoreFeature("HBA", pos, (i,)))
        if atom.q > 0:
            feats.append(PharmacophoreFeature("cation", pos, (i,)))
        elif atom.q < 0:
            feats.append(PharmacophoreFeature("anion", pos, (i,)))

    for ring in arom_ring_list:
        centroid = coords[list(ring)].mean(axis=0)
        feats.append(PharmacophoreFeature("aromatic", tuple(centroid),
                                          tuple(sorted(ring))))

    greasy = [i for i, atom in enumerate(mol.atoms)
              if atom.el == "C"
              and sum(mol.atoms[j].el == "C" for j in mol.neighbors(i)) >= 2
              and all(mol.atoms[j].el == "C" for j in mol.neighbors(i))]
    for cluster in _merge_clusters(coords, greasy, HYDROPHOBIC_MERGE_RADIUS):
        centroid = coords[cluster].mean(axis=0)
        feats.append(PharmacophoreFeature("hydrophobic", tuple(centroid),
                                          tuple(cluster)))
    return feats


def _merge_clusters(coords, indices, radius):
    """Single-linkage connected components under a distance threshold."""
    remaining = list(indices)
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        cluster = [seed]
        grew = True
        while grew:
            grew = False
            for other in list(remaining):
                if any(np.linalg.norm(coords[other] - coords[c]) <= radius
                       for c in cluster):
                    cluster.append(other)
                    remaining.remove(other)
                    grew = True
        clusters.append(sorted(cluster))
    return clusters


def build_pocket_condition(pocket: PocketStructure) -> list:
    """One PocketFeature per selected residue."""
    chosen = pocket.pocket_residues()
    if not chosen:
        raise ValueError("empty pocket selection")
    feats = []
    for res in chosen:
        ca = res.find_atom("CA")
        ca_pos = np.array(ca.xyz) if ca is not None else res.atom_coords().mean(axis=0)
        side = [np.array(a.xyz) for a in res.atoms
                if a.name not in BACKBONE_ATOMS]
        if side:
            sc, flag = np.mean(side, axis=0), True
        else:
            sc, flag = np.zeros(3), False
        feats.append(PocketFeature(res.name, res.seq, tuple(ca_pos),
                                   tuple(sc), flag))
    return feats


def pocket_centroid(pocket_features) -> np.ndarray:
    """Mean C-alpha position; the shared generation frame origin."""
    if not pocket_features:
        return np.zeros(3)
    return np.array([f.ca for f in pocket_features]).mean(axis=0)


def subsample_features(features, keep_probability: float, rng) -> list:
    """Independently keep each feature with the given probability."""
    return [f for f in features if rng.random() < keep_probability]


# -- embedding ---------------------------------------------------------

def condition_params_init(params: Params, dim: int, rng, dtype=np.float32):
    embedding_init(params, "cond.ph_type", len(FEATURE_KINDS), dim, rng, dtype)
    embedding_init(params, "cond.res_type", len(RESIDUE_TYPES), dim, rng, dtype)
    mlp_init(params, "cond.ph_mlp", [3, dim, dim], rng, dtype)
    mlp_init(params, "cond.res_mlp", [7, dim, dim], rng, dtype)


def assemble_conditions(params: Params, cs: ConditionSet, origin=None) -> Tensor:
    """Stacked condition rows: pharmacophores first, then pocket residues.

    All coordinates are shifted so ``origin`` (default: the pocket
    centroid, or zero without a pocket) becomes the frame origin.
    """
    if origin is None:
        origin = pocket_centroid(cs.pocket)
    origin = np.asarray(origin, dtype=np.float64)

    dim = params["cond.ph_type"].shape[1]
    dtype = params["cond.ph_type"].dtype
    rows = []
    if cs.pharmacophores:
        centers = np.array([f.center for f in cs.pharmacophores]) - origin
        kinds = np.array([KIND_INDEX[f.kind] for f in cs.pharmacophores])
        rows.append(mlp_forward(params, "cond.ph_mlp",
                                Tensor(centers.astype(dtype)))
                    + embedding(params, "cond.ph_type", kinds))
    if cs.pocket:
        packed = np.array([
            np.concatenate([np.asarray(f.ca) - origin,
                            (np.asarray(f.sidechain) - origin
                             if f.has_sidechain else np.zeros(3)),
                            [1.0 if f.has_sidechain else 0.0]])
            for f in cs.pocket])
        types = np.array([RESIDUE_TYPE_INDEX[f.residue_type] for f in cs.pocket])
        rows.append(mlp_forward(params, "cond.res_mlp",
                                Tensor(packed.astype(dtype)))
                    + embedding(params, "cond.res_type", types))
    if not rows:
        return Tensor(np.zeros((0, dim), dtype=dtype))
    return concat(rows, axis=0) if len(rows) > 1 else rows[0]


# -- serialization -----------------------------------------------------

def features_to_json(features) -> str:
    return json.dumps([{"kind": f.kind, "center": list(f.center)}
                       for f in features])


def features_from_json(text: str) -> list:
    return [PharmacophoreFeature(d["kind"], tuple(d["center"]))
            for d in json.loads(text)]
