"""Autoencoder tests: encoder term structure, quantizer rules,
decoder well-formedness, gradient checks, and small training runs."""

import numpy as np
import pytest

from mevo.codec import (
    CapacityError,
    CodecConfig,
    check_codebook,
    codec_loss,
    decode,
    encode,
    init_codec,
    quantize,
    train_codec,
    trainable_names,
    _pack_batch,
)
from mevo.molgraph import BondType, GeometryError, MolError
from mevo.nn.gradcheck import grad_check
from mevo.nn.tensor import Tensor

from conftest import build_mol

SMALL = CodecConfig(d=16, k_code=24, max_atoms=8, hidden=12, seed=7)


def propanol_like(coords_scale=1.0):
    coords = coords_scale * np.array([
        [0.0, 0.0, 0.0],
        [1.5, 0.1, -0.2],
        [2.2, 1.4, 0.3],
        [3.6, 1.3, 0.1],
        [1.9, -1.1, 0.5],
    ])
    return build_mol(
        [("C", 3, 0), ("C", 0, 0), ("C", 2, 0), ("O", 1, 0), ("N", 2, 0)],
        [(0, 1, BondType.SINGLE), (1, 2, BondType.SINGLE),
         (2, 3, BondType.SINGLE), (1, 4, BondType.DOUBLE)],
        coords=coords,
    )


class TestEncode:
    def test_zero_networks_give_zero_latents(self):
        params = init_codec(SMALL)
        for name in params.names():
            if name.startswith("enc."):
                params[name].data[...] = 0.0
        seq = encode(propanol_like(), params)
        assert np.all(seq.z == 0.0)

    def test_translation_removed_by_centering(self):
        params = init_codec(SMALL)
        mol = propanol_like()
        shifted = mol.with_coords(mol.coords + np.array([5.0, -3.0, 11.0]))
        np.testing.assert_allclose(encode(mol, params).z,
                                   encode(shifted, params).z, atol=1e-5)

    def test_bond_change_touches_only_its_endpoints(self):
        params = init_codec(SMALL)
        mol = propanol_like()
        bonds = np.asarray(mol.bonds).copy()
        bonds[2, 3] = bonds[3, 2] = int(BondType.DOUBLE)
        other = build_mol([(a.el, a.h, a.q) for a in mol.atoms], [],
                          coords=mol.coords)
        other = type(mol)(other.atoms, bonds, mol.coords)
        za, zb = encode(mol, params).z, encode(other, params).z
        changed = np.abs(za - zb).max(axis=1) > 0
        assert changed[2] and changed[3]
        assert not changed[[0, 1, 4]].any()

    def test_bond_term_ablation(self):
        # with the bond-type table zeroed, the two graphs above encode
        # identically: the difference lives entirely in the bond term
        params = init_codec(SMALL)
        params["enc.bond"].data[...] = 0.0
        mol = propanol_like()
        bonds = np.asarray(mol.bonds).copy()
        bonds[2, 3] = bonds[3, 2] = int(BondType.DOUBLE)
        other = type(mol)(mol.atoms, bonds, mol.coords)
        np.testing.assert_array_equal(encode(mol, params).z, encode(other, params).z)

    def test_permutation_changes_encoding(self):
        params = init_codec(SMALL)
        mol = propanol_like()
        perm = [4, 2, 0, 1, 3]
        pmol = build_mol(
            [(mol.atoms[p].el, mol.atoms[p].h, mol.atoms[p].q) for p in perm],
            [], coords=mol.coords[perm])
        bonds = np.asarray(mol.bonds)[np.ix_(perm, perm)]
        pmol = type(mol)(pmol.atoms, bonds, mol.coords[perm])
        za = encode(mol, params).z
        zp = encode(pmol, params).z
        assert not np.allclose(zp, za[perm], atol=1e-4)

    def test_uniform_index_table_restores_permutation_covariance(self):
        params = init_codec(SMALL)
        params["enc.index"].data[...] = params["enc.index"].data[0]
        mol = propanol_like()
        perm = [4, 2, 0, 1, 3]
        bonds = np.asarray(mol.bonds)[np.ix_(perm, perm)]
        pmol = build_mol(
            [(mol.atoms[p].el, mol.atoms[p].h, mol.atoms[p].q) for p in perm],
            [], coords=mol.coords[perm])
        pmol = type(mol)(pmol.atoms, bonds, mol.coords[perm])
        np.testing.assert_allclose(encode(pmol, params).z,
                                   encode(mol, params).z[perm], atol=1e-5)

    def test_capacity_error(self):
        params = init_codec(CodecConfig(d=8, k_code=8, max_atoms=3, hidden=4))
        with pytest.raises(CapacityError):
            encode(propanol_like(), params)

    def test_coordinates_required(self):
        params = init_codec(SMALL)
        with pytest.raises(GeometryError):
            encode(build_mol([("C", 4, 0)]), params)

    def test_tokens_are_nearest_rows(self):
        params = init_codec(SMALL)
        seq = encode(propanol_like(), params)
        d2 = ((seq.z[:, None, :] - seq.codebook[None]) ** 2).sum(axis=-1)
        np.testing.assert_array_equal(seq.tokens, d2.argmin(axis=1))


class TestQuantize:
    def test_exact_row_maps_to_its_token(self):
        rng = np.random.default_rng(0)
        cb = rng.normal(size=(16, 4))
        tokens, snapped = quantize(cb[5][None], cb)
        assert tokens.tolist() == [5]
        np.testing.assert_array_equal(snapped[0], cb[5])

    def test_equidistant_tie_takes_lower_index(self):
        cb = np.zeros((8, 3))
        cb[:, 0] = np.arange(8) + 10.0  # distinct rows
        cb[2] = [1.0, 0.0, 0.0]
        cb[7] = [-1.0, 0.0, 0.0]
        tokens, _ = quantize(np.zeros((1, 3)), cb)
        assert tokens.tolist() == [2]

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(3)
        cb = rng.normal(size=(16, 6))
        z = rng.normal(size=(40, 6))
        tokens, _ = quantize(z, cb)
        brute = [int(np.argmin([((v - c) ** 2).sum() for c in cb])) for v in z]
        assert tokens.tolist() == brute

    def test_duplicate_rows_rejected(self):
        cb = np.ones((4, 3))
        cb[0] = [1.0, 2.0, 3.0]
        cb[2] = [4.0, 5.0, 6.0]
        cb[3] = cb[0] + 1e-12
        with pytest.raises(ValueError, match="degenerate"):
            check_codebook(cb)

    def test_straight_through_gradient_is_identity(self):
        rng = np.random.default_rng(1)
        cb = rng.normal(size=(6, 5))
        z = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        _, snapped = quantize(z, cb)
        (snapped * 2.0).sum().backward()
        np.testing.assert_array_equal(z.grad, np.full((3, 5), 2.0))


class TestDecode:
    def test_untrained_decode_is_well_formed(self):
        params = init_codec(SMALL)
        rng = np.random.default_rng(0)
        tokens = rng.integers(0, SMALL.k_code, size=7)
        mol = decode(tokens, params)
        assert len(mol.atoms) == 7
        bonds = np.asarray(mol.bonds)
        np.testing.assert_array_equal(bonds, bonds.T)
        assert not np.diag(bonds).any()

    def test_bond_symmetry_from_logit_averaging(self):
        params = init_codec(SMALL)
        z = np.random.default_rng(2).normal(size=(6, SMALL.d))
        mol = decode(z, params)
        np.testing.assert_array_equal(np.asarray(mol.bonds), np.asarray(mol.bonds).T)

    def test_same_tokens_decode_identically(self):
        params = init_codec(SMALL)
        tokens = np.array([3, 1, 4, 1, 5])
        a, b = decode(tokens, params), decode(tokens, params)
        assert a.atoms == b.atoms
        np.testing.assert_array_equal(np.asarray(a.bonds), np.asarray(b.bonds))
        np.testing.assert_array_equal(a.coords, b.coords)

    def test_token_path_equals_latent_path(self):
        params = init_codec(SMALL)
        tokens = np.array([0, 7, 7, 2])
        via_tokens = decode(tokens, params)
        via_latents = decode(params["vq.codebook"].data[tokens], params)
        assert via_tokens.atoms == via_latents.atoms
        np.testing.assert_array_equal(np.asarray(via_tokens.bonds),
                                      np.asarray(via_latents.bonds))

    def test_bad_inputs(self):
        params = init_codec(SMALL)
        with pytest.raises(ValueError, match="token outside"):
            decode(np.array([0, SMALL.k_code]), params)
        with pytest.raises(ValueError, match="expected"):
            decode(np.zeros((2, SMALL.d + 1)), params)
        with pytest.raises(MolError):
            decode(np.zeros(0, dtype=np.int64), params)


class TestGradients:
    def test_full_loss_gradient_check(self):
        config = CodecConfig(d=6, k_code=10, max_atoms=4, hidden=5, seed=11)
        params = init_codec(config)
        mol = build_mol(
            [("C", 3, 0), ("N", 1, 0), ("O", 0, -1)],
            [(0, 1, BondType.SINGLE), (1, 2, BondType.DOUBLE)],
            coords=np.array([[0.0, 0.0, 0.0], [1.4, 0.2, 0.0], [2.1, 1.2, 0.4]]),
        )
        batch = _pack_batch([mol], None, np.float32)
        worst = grad_check(
            lambda p: codec_loss(p, batch, config, straight_through=False)[0],
            params, names=trainable_names(params))
        assert worst <= 1e-4

    def test_straight_through_and_true_loss_values_agree(self):
        config = CodecConfig(d=6, k_code=10, max_atoms=4, hidden=5, seed=11)
        params = init_codec(config)
        mol = build_mol(
            [("C", 3, 0), ("N", 1, 0), ("O", 0, -1)],
            [(0, 1, BondType.SINGLE), (1, 2, BondType.DOUBLE)],
            coords=np.array([[0.0, 0.0, 0.0], [1.4, 0.2, 0.0], [2.1, 1.2, 0.4]]),
        )
        batch = _pack_batch([mol], None, np.float32)
        a, _, _ = codec_loss(params, batch, config, straight_through=True)
        b, _, _ = codec_loss(params, batch, config, straight_through=False)
        assert float(a.data) == float(b.data)

    def test_codebook_not_gradient_trained(self):
        config = CodecConfig(d=6, k_code=10, max_atoms=4, hidden=5, seed=11)
        params = init_codec(config)
        mol = propanol_like()
        batch = _pack_batch([build_mol([("C", 4, 0)], coords=np.zeros((1, 3)))],
                            None, np.float32)
        del mol
        loss, _, _ = codec_loss(params, batch, config)
        loss.backward()
        assert params["vq.codebook"].grad is None
        assert params["vq.ema_size"].grad is None


class TestTraining:
    def test_single_molecule_memorization(self):
        config = CodecConfig(d=32, k_code=16, max_atoms=8, hidden=32, seed=5,
                             lr=3e-3, batch_size=1, epochs=900,
                             codebook_refresh_step=60, dead_code_interval=1000,
                             augment_rotations=False, kmeans_sample=16)
        params, report = train_codec([propanol_like()], config)
        assert not report["aborted"]
        assert report["categorical_accuracy"] == 1.0
        assert report["exact_graphs"] == 1.0
        assert report["mean_aligned_rmsd"] <= 0.05
        # the quantized path reconstructs this molecule exactly as well
        from mevo.codec import reconstruction_report
        tok = reconstruction_report(params, [propanol_like()], use_tokens=True)
        assert tok["categorical_accuracy"] == 1.0

    def test_loss_trend_is_downhill(self):
        config = CodecConfig(d=16, k_code=8, max_atoms=8, hidden=16, seed=5,
                             lr=3e-3, batch_size=1, epochs=300,
                             codebook_refresh_step=40, dead_code_interval=1000,
                             augment_rotations=False, kmeans_sample=16)
        _, report = train_codec([propanol_like()], config)
        curve = np.asarray(report["loss_curve"])
        window = 100
        ma = np.convolve(curve, np.ones(window) / window, mode="valid")
        assert ma[-1] < 0.5 * ma[0]
        upticks = np.diff(ma) > 0.02 * ma[:-1]
        assert not upticks.any()

    def test_shuffled_order_changes_trajectory(self):
        mols = [propanol_like(), propanol_like(0.9)]
        base = dict(d=16, k_code=8, max_atoms=8, hidden=16, seed=3, lr=3e-3,
                    batch_size=1, epochs=120, codebook_refresh_step=30,
                    dead_code_interval=1000, augment_rotations=False,
                    kmeans_sample=16)
        _, a = train_codec(mols, CodecConfig(shuffle=True, **base))
        _, b = train_codec(mols, CodecConfig(shuffle=False, **base))
        assert a["loss_curve"] != b["loss_curve"]
        assert a["categorical_accuracy"] >= 0.99
        assert b["categorical_accuracy"] >= 0.99

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts_to_last_snapshot(self):
        config = CodecConfig(d=8, k_code=8, max_atoms=8, hidden=8, seed=0,
                             lr=1e6, batch_size=1, epochs=200,
                             codebook_refresh_step=5, dead_code_interval=1000,
                             augment_rotations=False, kmeans_sample=16,
                             snapshot_interval=2)
        params, report = train_codec([propanol_like(100.0)], config)
        assert report["aborted"]
        assert report["steps"] < 200
        for name in params.names():
            assert np.all(np.isfinite(params[name].data)), name

    def test_dead_codes_get_reseeded(self):
        config = CodecConfig(d=8, k_code=8, max_atoms=8, hidden=8, seed=2,
                             lr=1e-3, batch_size=1, epochs=60,
                             ema_decay=0.8, codebook_refresh_step=2,
                             dead_code_interval=5, dead_code_floor=0.1,
                             augment_rotations=False, kmeans_sample=16)
        _, report = train_codec([build_mol([("C", 4, 0)], coords=np.zeros((1, 3)))],
                                config)
        assert report["dead_codes_reseeded"] > 0

    def test_rotation_augmentation_runs(self):
        config = CodecConfig(d=16, k_code=8, max_atoms=8, hidden=12, seed=1,
                             lr=3e-3, batch_size=2, epochs=30,
                             codebook_refresh_step=10, dead_code_interval=1000,
                             kmeans_sample=16)
        _, report = train_codec([propanol_like(), propanol_like(1.1)], config)
        assert not report["aborted"]
        assert len(report["loss_curve"]) == report["steps"]

    def test_corpus_validation(self):
        config = CodecConfig(d=8, k_code=8, max_atoms=2, hidden=4)
        with pytest.raises(CapacityError):
            train_codec([propanol_like()], config)
        with pytest.raises(ValueError):
            train_codec([], config)
        with pytest.raises(GeometryError):
            train_codec([build_mol([("C", 4, 0)])],
                        CodecConfig(d=8, k_code=8, max_atoms=4, hidden=4))


class TestConfig:
    def test_rejects_nonpositive_sizes(self):
        with pytest.raises(ValueError):
            CodecConfig(d=0)
        with pytest.raises(ValueError):
            CodecConfig(commitment=0.0)
        with pytest.raises(ValueError):
            CodecConfig(ema_decay=1.0)

    def test_checkpoint_round_trip(self, tmp_path):
        from mevo.nn.checkpoint import load_checkpoint, save_checkpoint
        params = init_codec(SMALL)
        path = tmp_path / "codec.mevo"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        assert loaded.meta["codec"]["d"] == SMALL.d
        mol = decode(np.array([1, 2, 3]), loaded)
        assert len(mol.atoms) == 3
