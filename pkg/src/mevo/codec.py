"""Vector-quantized molecular autoencoder.

The encoder folds coordinates, atom categories and bond counts into one
latent vector per heavy atom; a learned codebook snaps those latents to
discrete tokens; three decoder heads rebuild coordinates, atom features
and the bond matrix.  Training minimizes cross-entropy on every
categorical feature plus a weighted L2 on coordinates, with a
straight-through estimator and an EMA-updated codebook on the quantized
path.

Atom order matters: the encoder consumes atoms in the order given (the
bond-feature term looks up an embedding of the atom's position), so two
atom orderings of the same molecule encode differently.  Callers that
need a stable encoding should put molecules in canonical order first.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .molgraph import (
    ELEMENTS,
    ELEMENT_INDEX,
    MAX_H,
    CHARGE_RANGE,
    AtomFeature,
    BondType,
    MolError,
    GeometryError,
    MolGraph,
    aligned_rmsd,
    random_rotation_matrix,
    valence_ok,
)
from .nn.layers import Params, embedding_init, mlp_init, mlp_forward
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor, as_tensor, cross_entropy_rows, embedding_lookup, squared_error

N_ELEMENT = len(ELEMENTS)
N_H = MAX_H + 1
N_CHARGE = CHARGE_RANGE[1] - CHARGE_RANGE[0] + 1
N_BOND = max(BondType) + 1


class CapacityError(MolError):
    """Molecule has more atoms than the codec was configured for."""


@dataclass(frozen=True)
class CodecConfig:
    """Sizes, loss weights and training knobs for the autoencoder."""

    d: int = 64                  # latent width
    k_code: int = 512            # codebook rows
    max_atoms: int = 50
    hidden: int = 128            # width of every MLP hidden layer
    coord_weight: float = 1.0    # lambda on the coordinate L2 term
    commitment: float = 0.25     # beta on the commitment term
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 60
    ema_decay: float = 0.99
    codebook_refresh_step: int = 200   # k-means re-fit of the codebook
    dead_code_interval: int = 200
    dead_code_floor: float = 0.01      # fraction of mean usage below which a code is dead
    kmeans_iters: int = 20
    kmeans_sample: int = 4096
    augment_rotations: bool = True
    shuffle: bool = True
    snapshot_interval: int = 50
    accuracy_target: float = 0.99      # reconstruction gates for reporting
    rmsd_target: float = 0.2

    def __post_init__(self):
        for field in ("d", "k_code", "max_atoms", "hidden", "batch_size",
                      "epochs", "snapshot_interval"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        for field in ("coord_weight", "commitment", "lr", "rmsd_target"):
            if getattr(self, field) <= 0.0:
                raise ValueError(f"{field} must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")
        if not 0.0 < self.accuracy_target <= 1.0:
            raise ValueError("accuracy_target must lie in (0, 1]")


@dataclass
class LatentSeq:
    """Encoded molecule: continuous latents, their tokens, the codebook.

    ``tokens[i]`` is the index of the codebook row nearest to ``z[i]``
    in Euclidean distance.  Arrays are views, not copies.
    """

    z: np.ndarray        # (n, d)
    tokens: np.ndarray   # (n,) int
    codebook: np.ndarray  # (k_code, d)


# -- parameters --------------------------------------------------------


def init_codec(config: CodecConfig, dtype=np.float32) -> Params:
    """Fresh parameter set; the codebook starts as small uniform noise
    and is re-fit to real latents early in training."""
    rng = np.random.default_rng(config.seed)
    params = Params({"codec": dataclasses.asdict(config)})
    d, hid = config.d, config.hidden
    mlp_init(params, "enc.f1", [3, hid, d], rng, dtype)
    embedding_init(params, "enc.el", N_ELEMENT, d, rng, dtype)
    embedding_init(params, "enc.h", N_H, d, rng, dtype)
    embedding_init(params, "enc.q", N_CHARGE, d, rng, dtype)
    embedding_init(params, "enc.bond", N_BOND, d, rng, dtype)
    embedding_init(params, "enc.index", config.max_atoms, d, rng, dtype)
    mlp_init(params, "dec.g1", [d, hid, 3], rng, dtype)
    mlp_init(params, "dec.g2", [d, hid, N_ELEMENT + N_H + N_CHARGE], rng, dtype)
    mlp_init(params, "dec.g3", [d, hid, N_BOND], rng, dtype)
    params.add("vq.codebook", _uniform_codebook(rng, config.k_code, d, dtype))
    params.add("vq.ema_size", np.ones(config.k_code, dtype=dtype))
    params.add("vq.ema_sum", params["vq.codebook"].data.copy())
    return params


def _uniform_codebook(rng, k, d, dtype):
    bound = 1.0 / np.sqrt(d)
    return rng.uniform(-bound, bound, size=(k, d)).astype(dtype)


def codec_config(params: Params) -> CodecConfig:
    return CodecConfig(**params.meta["codec"])


def trainable_names(params: Params) -> list:
    """Parameters updated by gradient descent: everything but the
    codebook and its EMA accumulators, which move by averaging only."""
    return [n for n in params.names() if not n.startswith("vq.")]


# -- feature arrays ----------------------------------------------------


def _atom_indices(mol: MolGraph):
    el = np.array([ELEMENT_INDEX[a.el] for a in mol.atoms], dtype=np.int64)
    h = np.array([a.h for a in mol.atoms], dtype=np.int64)
    q = np.array([a.q - CHARGE_RANGE[0] for a in mol.atoms], dtype=np.int64)
    return el, h, q


def _bond_counts(bonds: np.ndarray) -> np.ndarray:
    """Per-atom histogram of bond codes over every atom of the molecule.

    Row i counts bonds[i, j] for all j, the no-bond class and the j = i
    entry included, so the encoder's bond term is the full sum over
    atom indices rather than a sum over incident bonds only.
    """
    return (bonds[:, :, None] == np.arange(N_BOND, dtype=bonds.dtype)).sum(axis=1)


def _encode_graph(params: Params, coords, el, h, q, counts) -> Tensor:
    """Latents for (possibly batched) padded feature arrays.

    ``coords`` (..., M, 3); ``el``/``h``/``q`` (..., M) ints;
    ``counts`` (..., M, n_bond) floats.  Padded rows should be masked by
    the caller; this function does not know which rows are real.
    """
    z = mlp_forward(params, "enc.f1", as_tensor(coords))
    z = z + embedding_lookup(params["enc.el"], el)
    z = z + embedding_lookup(params["enc.h"], h)
    z = z + embedding_lookup(params["enc.q"], q)
    m = np.shape(el)[-1]
    pos = np.broadcast_to(np.arange(m), np.shape(el))
    bond_mix = as_tensor(counts) @ params["enc.bond"]
    return z + bond_mix * embedding_lookup(params["enc.index"], pos)


def encode(mol: MolGraph, params: Params, rotation=None) -> LatentSeq:
    """Continuous latents plus their nearest-codebook tokens.

    The molecule is centered internally.  ``rotation`` is the
    training-time augmentation hook: a 3x3 matrix applied after
    centering (training draws it at random; evaluation passes None).
    """
    cfg = codec_config(params)
    n = len(mol.atoms)
    if n == 0:
        raise MolError("cannot encode an empty molecule")
    if n > cfg.max_atoms:
        raise CapacityError(f"{n} atoms exceeds the codec capacity {cfg.max_atoms}")
    if mol.coords is None:
        raise GeometryError("encoding requires coordinates")
    dtype = params["enc.el"].data.dtype
    coords = (mol.coords - mol.coords.mean(axis=0)).astype(dtype)
    if rotation is not None:
        coords = coords @ np.asarray(rotation, dtype=dtype).T
    el, h, q = _atom_indices(mol)
    counts = _bond_counts(np.asarray(mol.bonds)).astype(dtype)
    z = _encode_graph(params, coords, el, h, q, counts).data
    codebook = params["vq.codebook"].data
    return LatentSeq(z=z, tokens=_nearest(z, codebook), codebook=codebook)


# -- quantization ------------------------------------------------------


def _nearest(z: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the closest codebook row per latent; first row wins ties."""
    d2 = (z * z).sum(axis=-1, keepdims=True) - 2.0 * z @ codebook.T \
        + (codebook * codebook).sum(axis=-1)
    return np.argmin(d2, axis=-1)


def check_codebook(codebook: np.ndarray, tol: float = 1e-9):
    """Reject codebooks with (near-)duplicate rows, which would make
    nearest-row assignment depend on floating noise."""
    cb = np.asarray(codebook, dtype=np.float64)
    d2 = ((cb[:, None, :] - cb[None, :, :]) ** 2).sum(axis=-1)
    d2[np.diag_indices_from(d2)] = np.inf
    i, j = np.unravel_index(np.argmin(d2), d2.shape)
    if d2[i, j] < tol * tol:
        raise ValueError(f"degenerate codebook: rows {min(i, j)} and {max(i, j)} coincide")


def quantize(z, codebook, validate: bool = True):
    """Snap latents to their nearest codebook rows.

    Returns ``(tokens, snapped)``.  For a plain array ``snapped`` is the
    looked-up rows; for a :class:`Tensor` it is the straight-through
    form whose backward pass hands the gradient to ``z`` unchanged (the
    codebook itself learns by exponential moving averages, not
    gradients).
    """
    if validate:
        check_codebook(codebook)
    cb = codebook.data if isinstance(codebook, Tensor) else np.asarray(codebook)
    if isinstance(z, Tensor):
        tokens = _nearest(z.data, cb)
        snapped = z + as_tensor(cb[tokens] - z.data)
        return tokens, snapped
    z = np.asarray(z)
    tokens = _nearest(z, cb)
    return tokens, cb[tokens]


# -- decoding ----------------------------------------------------------


def _decode_graph(params: Params, z: Tensor):
    """Coordinate, atom-category and pairwise bond logits from latents
    of shape (..., M, d).  Bond logits are symmetrized by averaging the
    (i, j) and (j, i) entries, so the decoded matrix is symmetric by
    construction."""
    coords = mlp_forward(params, "dec.g1", z)
    cat = mlp_forward(params, "dec.g2", z)
    pair = z.expand_dims(-2) * z.expand_dims(-3)
    bond = mlp_forward(params, "dec.g3", pair)
    bond = (bond + bond.swapaxes(-3, -2)) * 0.5
    return coords, cat, bond


def decode(latents_or_tokens, params: Params) -> MolGraph:
    """Rebuild a molecule from token indices or continuous latents.

    Every categorical head takes its argmax; nothing enforces chemical
    validity, so the result can be a perfectly well-formed graph of an
    impossible molecule.  Check it with :func:`molgraph.valence_ok`.
    """
    arr = np.asarray(latents_or_tokens)
    cfg = codec_config(params)
    codebook = params["vq.codebook"].data
    if arr.ndim == 1 and np.issubdtype(arr.dtype, np.integer):
        if arr.size and (arr.min() < 0 or arr.max() >= cfg.k_code):
            raise ValueError(f"token outside codebook of {cfg.k_code} rows")
        z = codebook[arr]
    elif arr.ndim == 2 and arr.shape[1] == cfg.d:
        z = arr.astype(codebook.dtype)
    else:
        raise ValueError(f"expected (n,) tokens or (n, {cfg.d}) latents, got shape {arr.shape}")
    if z.shape[0] == 0:
        raise MolError("cannot decode an empty latent sequence")
    coords_t, cat_t, bond_t = _decode_graph(params, as_tensor(z))
    cat = cat_t.data
    el = cat[:, :N_ELEMENT].argmax(axis=1)
    h = cat[:, N_ELEMENT:N_ELEMENT + N_H].argmax(axis=1)
    q = cat[:, N_ELEMENT + N_H:].argmax(axis=1) + CHARGE_RANGE[0]
    bonds = bond_t.data.argmax(axis=-1).astype(np.int8)
    np.fill_diagonal(bonds, 0)
    atoms = tuple(AtomFeature(ELEMENTS[e], int(hh), int(qq)) for e, hh, qq in zip(el, h, q))
    return MolGraph(atoms, bonds, coords_t.data.astype(np.float64))


# -- batching and loss -------------------------------------------------


def _pack_batch(mols, rotations, dtype):
    """Pad a list of centered molecules into dense training arrays."""
    n_max = max(len(m.atoms) for m in mols)
    b = len(mols)
    coords = np.zeros((b, n_max, 3), dtype=dtype)
    el = np.zeros((b, n_max), dtype=np.int64)
    h = np.zeros((b, n_max), dtype=np.int64)
    q = np.zeros((b, n_max), dtype=np.int64)
    counts = np.zeros((b, n_max, N_BOND), dtype=dtype)
    mask = np.zeros((b, n_max), dtype=dtype)
    bonds = np.zeros((b, n_max, n_max), dtype=np.int64)
    for i, mol in enumerate(mols):
        n = len(mol.atoms)
        xyz = mol.coords - mol.coords.mean(axis=0)
        if rotations is not None:
            xyz = xyz @ rotations[i].T
        coords[i, :n] = xyz.astype(dtype)
        el[i, :n], h[i, :n], q[i, :n] = _atom_indices(mol)
        counts[i, :n] = _bond_counts(np.asarray(mol.bonds)).astype(dtype)
        mask[i, :n] = 1.0
        bonds[i, :n, :n] = mol.bonds
    pair_mask = mask[:, :, None] * mask[:, None, :]
    pair_mask *= 1.0 - np.eye(n_max, dtype=dtype)
    return {"coords": coords, "el": el, "h": h, "q": q, "counts": counts,
            "mask": mask, "bonds": bonds, "pair_mask": pair_mask}


def _recon_terms(params, z, batch, coord_weight):
    coords_t, cat_t, bond_t = _decode_graph(params, z)
    mask, pair_mask = batch["mask"], batch["pair_mask"]
    ce = cross_entropy_rows(cat_t[..., :N_ELEMENT], batch["el"], mask)
    ce = ce + cross_entropy_rows(cat_t[..., N_ELEMENT:N_ELEMENT + N_H], batch["h"], mask)
    ce = ce + cross_entropy_rows(cat_t[..., N_ELEMENT + N_H:], batch["q"], mask)
    if pair_mask.sum() > 0:  # a batch of single atoms has no pairs at all
        ce = ce + cross_entropy_rows(bond_t, batch["bonds"], pair_mask)
    return ce + squared_error(coords_t, batch["coords"], mask) * coord_weight


def codec_loss(params: Params, batch: dict, config: CodecConfig,
               straight_through: bool = True):
    """Total training loss for one padded batch.

    The reconstruction terms are evaluated twice -- once from the raw
    latents and once through the quantized latents -- so the decoder
    stays accurate on both the continuous path and the tokens the
    diffusion model will hand it.  The commitment term pulls the
    encoder toward the codebook it is being snapped to.

    ``straight_through`` selects the backward convention for the
    quantized leg.  Training keeps it on: the encoder receives the
    quantized leg's gradient as if quantization were the identity.
    With it off, the quantizer output is treated as the locally
    constant function it really is, which is the form a
    finite-difference check can verify; the forward value is identical
    either way.

    Returns ``(loss, tokens, z_data)``; the extras feed the EMA
    codebook update, which is not part of the differentiated loss.
    """
    z = _encode_graph(params, batch["coords"], batch["el"], batch["h"],
                      batch["q"], batch["counts"])
    z = z * as_tensor(batch["mask"][..., None], z.data.dtype)
    tokens, z_q = quantize(z, params["vq.codebook"], validate=False)
    if not straight_through:
        z_q = as_tensor(params["vq.codebook"].data[tokens])
    loss = _recon_terms(params, z, batch, config.coord_weight)
    loss = loss + _recon_terms(params, z_q, batch, config.coord_weight)
    commit = squared_error(z, params["vq.codebook"].data[tokens], batch["mask"])
    loss = loss + commit * config.commitment
    return loss, tokens, z.data


def _ema_update(params: Params, z_data, tokens, mask, decay: float, eps: float = 1e-5):
    """Exponential-moving-average codebook step over one batch."""
    valid = mask.reshape(-1) > 0
    flat_z = z_data.reshape(-1, z_data.shape[-1])[valid]
    flat_t = tokens.reshape(-1)[valid]
    k = params["vq.codebook"].data.shape[0]
    counts = np.bincount(flat_t, minlength=k).astype(z_data.dtype)
    sums = np.zeros_like(params["vq.ema_sum"].data)
    np.add.at(sums, flat_t, flat_z)
    size = params["vq.ema_size"].data
    acc = params["vq.ema_sum"].data
    size += (1.0 - decay) * (counts - size)
    acc += (1.0 - decay) * (sums - acc)
    total = size.sum()
    smoothed = (size + eps) / (total + k * eps) * total
    params["vq.codebook"].data[...] = acc / smoothed[:, None]


def _kmeans(points: np.ndarray, k: int, rng, iters: int) -> np.ndarray:
    """Plain k-means with distance-squared seeding; empty clusters are
    reseeded to the current farthest point."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < k:
        extra = pts[rng.integers(0, len(pts), size=k - len(pts))]
        pts = np.concatenate([pts, extra + rng.normal(scale=1e-3, size=extra.shape)])
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(len(pts))]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        prob = d2 / d2.sum() if d2.sum() > 0 else np.full(len(pts), 1.0 / len(pts))
        centers[i] = pts[rng.choice(len(pts), p=prob)]
        d2 = np.minimum(d2, ((pts - centers[i]) ** 2).sum(axis=1))
    for _ in range(iters):
        assign = _nearest(pts, centers)
        far = np.argsort(-((pts - centers[assign]) ** 2).sum(axis=1))
        spare = 0
        for i in range(k):
            sel = assign == i
            if sel.any():
                centers[i] = pts[sel].mean(axis=0)
            else:
                centers[i] = pts[far[spare]]
                spare += 1
    return centers


def _refresh_codebook(params: Params, mols, config: CodecConfig, rng):
    """Re-fit the codebook to latents of the current encoder with
    k-means, replacing whatever the random initialization produced."""
    dtype = params["vq.codebook"].data.dtype
    sample = []
    total = 0
    for i in rng.permutation(len(mols)):
        rot = random_rotation_matrix(rng) if config.augment_rotations else None
        seq = encode(mols[i], params, rotation=rot)
        sample.append(seq.z)
        total += len(seq.z)
        if total >= config.kmeans_sample:
            break
    centers = _kmeans(np.concatenate(sample), config.k_code, rng, config.kmeans_iters)
    params["vq.codebook"].data[...] = centers.astype(dtype)
    params["vq.ema_sum"].data[...] = params["vq.codebook"].data
    params["vq.ema_size"].data[...] = 1.0


def _reseed_dead_codes(params: Params, z_data, mask, floor: float, rng) -> int:
    size = params["vq.ema_size"].data
    dead = np.nonzero(size < floor * size.mean())[0]
    if len(dead) == 0:
        return 0
    valid = mask.reshape(-1) > 0
    pool = z_data.reshape(-1, z_data.shape[-1])[valid]
    picks = pool[rng.integers(0, len(pool), size=len(dead))]
    fresh = max(float(size.mean()) * 0.1, 1e-3)
    size[dead] = fresh
    params["vq.ema_sum"].data[dead] = picks * fresh
    params["vq.codebook"].data[dead] = picks
    return len(dead)


def _copy_tensors(params: Params) -> dict:
    return {name: t.data.copy() for name, t in params.tensors.items()}


def _restore_tensors(params: Params, saved: dict):
    for name, arr in saved.items():
        params.tensors[name].data[...] = arr


# -- training ----------------------------------------------------------


def train_codec(corpus, config: CodecConfig):
    """Fit the autoencoder on a list of molecules with coordinates.

    Fully deterministic for a given config: one seeded generator drives
    shuffling, rotation augmentation, the codebook re-fit and dead-code
    reseeding.  A non-finite loss or gradient aborts the run and
    returns the last snapshot that was still healthy.

    Returns ``(params, report)``; the report is JSON-ready.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty training corpus")
    for mol in corpus:
        if len(mol.atoms) > config.max_atoms:
            raise CapacityError(
                f"corpus molecule with {len(mol.atoms)} atoms exceeds max_atoms={config.max_atoms}")
        if mol.coords is None:
            raise GeometryError("every training molecule needs coordinates")
    rng = np.random.default_rng(config.seed)
    params = init_codec(config)
    dtype = params["vq.codebook"].data.dtype
    state = AdamState()
    curve = []
    snapshot = _copy_tensors(params)
    aborted = False
    reseeded_total = 0
    step = 0
    n = len(corpus)
    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            mols = [corpus[i] for i in idx]
            rots = None
            if config.augment_rotations:
                rots = [random_rotation_matrix(rng) for _ in idx]
            batch = _pack_batch(mols, rots, dtype)
            params.zero_grad()
            try:
                loss, tokens, z_data = codec_loss(params, batch, config)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise FloatingPointError("non-finite loss")
                loss.backward()
                adam_step(params, state, config.lr)
            except FloatingPointError:
                _restore_tensors(params, snapshot)
                aborted = True
                break
            _ema_update(params, z_data, tokens, batch["mask"], config.ema_decay)
            step += 1
            curve.append(value)
            if step == config.codebook_refresh_step:
                _refresh_codebook(params, corpus, config, rng)
            elif step > config.codebook_refresh_step and step % config.dead_code_interval == 0:
                reseeded_total += _reseed_dead_codes(
                    params, z_data, batch["mask"], config.dead_code_floor, rng)
            if step % config.snapshot_interval == 0:
                snapshot = _copy_tensors(params)
        if aborted:
            break
    report = reconstruction_report(params, corpus)
    report.update({
        "steps": step,
        "aborted": aborted,
        "final_loss": curve[-1] if curve else None,
        "loss_curve": curve,
        "dead_codes_reseeded": reseeded_total,
    })
    return params, report


# -- evaluation --------------------------------------------------------

RMSD_EDGES = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, np.inf)


def reconstruction_report(params: Params, mols, use_tokens: bool = False) -> dict:
    """Round-trip accuracy of decode(encode(m)) over ``mols``.

    ``use_tokens`` routes the round trip through the quantizer instead
    of the raw latents.  Accuracies pool atoms (element, hydrogen
    count, charge) and unordered atom pairs (bond class, no-bond
    included); ``categorical_accuracy`` pools all four families.
    ``exact_graphs`` is the fraction of molecules with every
    categorical feature correct at once.
    """
    hits = {"element": 0, "h": 0, "charge": 0, "bond": 0}
    totals = {"element": 0, "h": 0, "charge": 0, "bond": 0}
    rmsds = []
    exact = 0
    valid = 0
    used = set()
    for mol in mols:
        seq = encode(mol, params)
        used.update(int(t) for t in seq.tokens)
        out = decode(seq.tokens if use_tokens else seq.z, params)
        el, h, q = _atom_indices(mol)
        oel, oh, oq = _atom_indices(out)
        iu = np.triu_indices(len(mol.atoms), k=1)
        pairs_ok = int((np.asarray(mol.bonds)[iu] == np.asarray(out.bonds)[iu]).sum())
        hits["element"] += int((el == oel).sum())
        hits["h"] += int((h == oh).sum())
        hits["charge"] += int((q == oq).sum())
        hits["bond"] += pairs_ok
        totals["element"] += len(el)
        totals["h"] += len(el)
        totals["charge"] += len(el)
        totals["bond"] += len(iu[0])
        if (el == oel).all() and (h == oh).all() and (q == oq).all() \
                and pairs_ok == len(iu[0]):
            exact += 1
        ok, _ = valence_ok(out)
        valid += bool(ok)
        rmsds.append(aligned_rmsd(mol, out))
    rmsds = np.array(rmsds) if rmsds else np.zeros(0)
    hist, _ = np.histogram(rmsds, bins=np.array(RMSD_EDGES))
    total_preds = sum(totals.values())
    return {
        "path": "tokens" if use_tokens else "continuous",
        "molecules": len(rmsds),
        "accuracy": {k: hits[k] / totals[k] if totals[k] else 1.0 for k in hits},
        "categorical_accuracy": sum(hits.values()) / total_preds if total_preds else 1.0,
        "exact_graphs": exact / len(rmsds) if len(rmsds) else 0.0,
        "valence_valid": valid / len(rmsds) if len(rmsds) else 0.0,
        "mean_aligned_rmsd": float(rmsds.mean()) if len(rmsds) else 0.0,
        "rmsd_histogram": {
            "edges": [e if np.isfinite(e) else None for e in RMSD_EDGES],
            "counts": hist.tolist(),
        },
        "codebook_usage": len(used) / params["vq.codebook"].data.shape[0],
    }
