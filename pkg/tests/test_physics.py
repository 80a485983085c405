"""Force field, relaxation, binding energy, interactions and scoring."""

import numpy as np
import pytest

from mevo import physics
from mevo.chemio import parse_smiles
from mevo.chemio.pocket import Residue, ResidueAtom
from mevo.molgraph import MolGraph, random_rotation_matrix
from mevo.physics import (
    PreparedPocket,
    default_forcefield,
    detect_interactions,
    energy_and_forces,
    interaction_ratio,
    ligand_system,
    potential_energy,
    relax,
)

from conftest import build_mol


@pytest.fixture(scope="module")
def ff():
    return default_forcefield()


def res(name, seq, atoms):
    return Residue(name, seq, "A", tuple(ResidueAtom(n, e, tuple(x))
                                         for n, e, x in atoms))


def single_atom_ligand(xyz, el="C"):
    h = {"C": 4, "N": 3, "O": 2}[el]
    return build_mol([(el, h, 0)], coords=[list(xyz)])


class TestPotentialEnergy:
    def test_lj_minimum_is_minus_epsilon(self, ff):
        sigma, eps = ff.lj("C")
        r = sigma * 2 ** (1 / 6)
        mol = build_mol([("C", 4, 0), ("C", 4, 0)],
                        coords=[[0, 0, 0], [r, 0, 0]])
        system = ligand_system(mol, ff)
        assert potential_energy(system, ff) == pytest.approx(-eps, abs=1e-12)

    def test_bond_at_ideal_length_zero(self, ff):
        mol = parse_smiles("CC").with_coords([[0, 0, 0], [1.54, 0, 0]])
        system = ligand_system(mol, ff)
        assert potential_energy(system, ff) == pytest.approx(0.0, abs=1e-12)

    def test_three_atom_hand_summation(self, ff):
        mol = parse_smiles("CCC").with_coords(
            [[0, 0, 0], [1.6, 0, 0], [1.6, 1.5, 0]])
        system = ligand_system(mol, ff)
        bond_terms = 300.0 * (1.6 - 1.54) ** 2 + 300.0 * (1.5 - 1.54) ** 2
        angle_term = 50.0 * (np.pi / 2 - np.deg2rad(109.47)) ** 2
        expect = bond_terms + angle_term   # 1-3 pair is bonded-excluded
        assert potential_energy(system, ff) == pytest.approx(expect, rel=1e-12)

    def test_cutoff_excludes_far_pairs(self, ff):
        mol = build_mol([("C", 4, 0), ("C", 4, 0)],
                        coords=[[0, 0, 0], [ff.cutoff + 1, 0, 0]])
        system = ligand_system(mol, ff)
        assert potential_energy(system, ff) == 0.0

    def test_coulomb_with_distance_dielectric(self, ff):
        # Two opposite unit charges, no bond: U = 332.06*q1*q2/(4 r^2) + LJ
        mol = build_mol([("N", 4, 1), ("F", 0, -1)],
                        coords=[[0, 0, 0], [6.0, 0, 0]])
        system = ligand_system(mol, ff)
        sig = np.sqrt(ff.lj("N")[0] * ff.lj("F")[0])
        eps = np.sqrt(ff.lj("N")[1] * ff.lj("F")[1])
        sr6 = (sig / 6.0) ** 6
        expect = 4 * eps * (sr6 * sr6 - sr6) + 332.06 * (1 * -1) / (4 * 36.0)
        assert potential_energy(system, ff) == pytest.approx(expect, rel=1e-12)

    def test_isometry_invariance(self, ff):
        mol = parse_smiles("NCC(=O)O")
        rng = np.random.default_rng(3)
        coords = rng.normal(size=(5, 3)) * 1.5
        system = ligand_system(mol, ff, coords)
        u0 = potential_energy(system, ff)
        rot = random_rotation_matrix(np.random.default_rng(11))
        moved = coords @ rot.T + np.array([3.0, -7.0, 2.0])
        assert potential_energy(system, ff, moved) == pytest.approx(u0, abs=1e-8)

    def test_unparameterized_atom_named(self, ff):
        pocket = [res("ALA", 1, [("CB", "Zn", (0, 0, 0))])]
        with pytest.raises(physics.ParameterError, match="Zn"):
            physics.pocket_system(pocket, ff)

    def test_forces_match_finite_differences(self, ff):
        mol = parse_smiles("NCC(=O)O")
        rng = np.random.default_rng(8)
        coords = rng.normal(size=(5, 3)) * 1.2
        system = ligand_system(mol, ff, coords)
        _, forces = energy_and_forces(system, ff, coords)
        h = 1e-6
        for a in range(5):
            for d in range(3):
                plus = coords.copy()
                minus = coords.copy()
                plus[a, d] += h
                minus[a, d] -= h
                num = -(potential_energy(system, ff, plus)
                        - potential_energy(system, ff, minus)) / (2 * h)
                assert forces[a, d] == pytest.approx(num, rel=1e-5, abs=1e-5)


class TestSmearCharges:
    def test_neutral_molecule_all_zero(self):
        mol = parse_smiles("CCO")
        assert np.allclose(physics.smear_charges(mol), 0.0)

    def test_charge_split_half_on_atom(self):
        mol = parse_smiles("[NH3+]C")
        q = physics.smear_charges(mol)
        assert q[0] == pytest.approx(0.5)
        assert q[1] == pytest.approx(0.5)
        assert q.sum() == pytest.approx(1.0)

    def test_isolated_ion_keeps_charge(self):
        mol = build_mol([("Cl", 0, -1)])
        assert physics.smear_charges(mol)[0] == pytest.approx(-1.0)


class TestRelax:
    def test_already_minimized_unchanged(self, ff):
        mol = parse_smiles("CC").with_coords([[0, 0, 0], [1.54, 0, 0]])
        system = ligand_system(mol, ff)
        result = relax(system, ff)
        assert result.converged
        assert result.iterations == 0
        assert np.allclose(result.coords, system.coords, atol=1e-6)

    def test_stretched_diatomic_reaches_ideal(self, ff):
        mol = parse_smiles("CC").with_coords([[0, 0, 0], [1.8, 0, 0]])
        system = ligand_system(mol, ff)
        result = relax(system, ff)
        assert result.converged
        d = np.linalg.norm(result.coords[1] - result.coords[0])
        assert d == pytest.approx(1.54, abs=0.01)

    def test_energy_monotone_nonincreasing(self, ff):
        mol = parse_smiles("CC(=O)Oc1ccccc1")
        rng = np.random.default_rng(17)
        coords = rng.normal(size=(len(mol.atoms), 3)) * 2.0
        system = ligand_system(mol, ff, coords)
        result = relax(system, ff, max_iters=200)
        trace = np.array(result.energy_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_frozen_atoms_do_not_move(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0, 0, 0))])]
        psys = physics.pocket_system(pocket, ff)
        lig = ligand_system(single_atom_ligand((2.0, 0, 0)), ff)
        comp = physics.complex_system(psys, lig)
        result = relax(comp, ff)
        assert np.allclose(result.coords[0], [0, 0, 0])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_start_raises(self, ff):
        mol = parse_smiles("CC").with_coords([[0, 0, 0], [1.8, 0, 0]])
        system = ligand_system(mol, ff)
        system.coords[0, 0] = 1e300   # overflow r^12 to inf
        with pytest.raises(physics.RelaxError):
            relax(system, ff)


class TestDeltaU:
    def pocket_one_atom(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0.0, 0.0, 0.0))])]
        return PreparedPocket.from_residues(pocket, ff)

    def test_far_ligand_zero(self, ff):
        prepared = self.pocket_one_atom(ff)
        lig = single_atom_ligand((100.0, 0.0, 0.0))
        du, _, _ = physics.delta_u(prepared, lig, lig.coords, ff)
        assert du == pytest.approx(0.0, abs=1e-6)

    def test_probe_at_lj_minimum(self, ff):
        prepared = self.pocket_one_atom(ff)
        sigma, eps = ff.lj("C")
        lig = single_atom_ligand((sigma * 2 ** (1 / 6), 0.0, 0.0))
        du, pose, _ = physics.delta_u(prepared, lig, lig.coords, ff)
        assert du == pytest.approx(-eps, abs=1e-9)
        assert np.allclose(pose, lig.coords, atol=1e-6)

    def test_clashing_atom_increases_du(self, ff):
        prepared = self.pocket_one_atom(ff)
        sigma, _ = ff.lj("C")
        good = build_mol([("C", 4, 0)],
                         coords=[[sigma * 2 ** (1 / 6), 0.0, 0.0]])
        clash = build_mol(
            [("C", 4, 0), ("C", 4, 0)],
            coords=[[sigma * 2 ** (1 / 6), 0.0, 0.0], [0.5 * sigma, 0.0, 0.0]])
        du_good, _, _ = physics.delta_u(prepared, good, good.coords, ff,
                                        max_iters=0)
        du_clash, _, _ = physics.delta_u(prepared, clash, clash.coords, ff,
                                         max_iters=0)
        assert du_clash > du_good

    def test_empty_ligand_exactly_zero(self, ff):
        prepared = self.pocket_one_atom(ff)
        empty = MolGraph((), np.zeros((0, 0), dtype=np.int8),
                         np.zeros((0, 3)))
        du, _, _ = physics.delta_u(prepared, empty, empty.coords, ff)
        assert du == 0.0


HEXAGON = 1.40 * np.array(
    [[np.cos(k * np.pi / 3), np.sin(k * np.pi / 3), 0.0] for k in range(6)])


def benzene_at(center, ff=None):
    mol = parse_smiles("c1ccccc1")
    return mol.with_coords(HEXAGON + np.asarray(center))


def phe_ring(seq, center, tilt=None):
    names = ("CG", "CD1", "CE1", "CZ", "CE2", "CD2")
    pts = HEXAGON.copy()
    if tilt is not None:
        pts = pts @ tilt.T
    pts = pts + np.asarray(center)
    return res("PHE", seq, [(n, "C", tuple(p)) for n, p in zip(names, pts)])


class TestDetectInteractions:
    def test_hydrogen_bond_found(self):
        # Ligand methanol O-H donating to a backbone carbonyl O.
        lig = parse_smiles("CO").with_coords([[0.0, 0.0, 0.0], [1.43, 0.0, 0.0]])
        carbonyl = res("GLY", 4, [
            ("C", "C", (1.43 + 2.9 + 1.23, 0.0, 0.0)),
            ("O", "O", (1.43 + 2.9, 0.0, 0.0)),
        ])
        records = detect_interactions([carbonyl], lig)
        kinds = [(r.kind, r.residue) for r in records]
        assert ("hydrogen_bond", "GLY4") in kinds
        hb = [r for r in records if r.kind == "hydrogen_bond"][0]
        assert hb.distance == pytest.approx(2.9, abs=1e-9)
        assert hb.ligand_atoms == (1,)
        assert hb.angle == pytest.approx(180.0, abs=1e-3)

    def test_hbond_rejected_beyond_cutoff(self):
        lig = parse_smiles("CO").with_coords([[0.0, 0.0, 0.0], [1.43, 0.0, 0.0]])
        carbonyl = res("GLY", 4, [
            ("C", "C", (1.43 + 3.8 + 1.23, 0.0, 0.0)),
            ("O", "O", (1.43 + 3.8, 0.0, 0.0)),
        ])
        assert detect_interactions([carbonyl], lig) == []

    def test_hbond_rejected_bad_angle(self):
        # Donor sits behind the acceptor's antecedent: angle < 90 deg.
        lig = parse_smiles("CO").with_coords([[0.0, 0.0, 0.0], [1.43, 0.0, 0.0]])
        carbonyl = res("GLY", 4, [
            ("C", "C", (1.43 + 2.9 - 1.23, 0.0, 0.0)),
            ("O", "O", (1.43 + 2.9, 0.0, 0.0)),
        ])
        records = detect_interactions([carbonyl], lig)
        assert all(r.kind != "hydrogen_bond" for r in records)

    def test_salt_bridge(self):
        lig = parse_smiles("[NH4+]").with_coords([[0.0, 0.0, 0.0]])
        asp = res("ASP", 12, [("OD1", "O", (3.5, 0.0, 0.0))])
        records = detect_interactions([asp], lig)
        bridges = [r for r in records if r.kind == "salt_bridge"]
        assert [(r.kind, r.residue) for r in bridges] == [("salt_bridge", "ASP12")]
        assert bridges[0].distance == pytest.approx(3.5)

    def test_salt_bridge_same_sign_ignored(self):
        lig = parse_smiles("[NH4+]").with_coords([[0.0, 0.0, 0.0]])
        lys = res("LYS", 8, [("NZ", "N", (3.0, 0.0, 0.0))])
        assert detect_interactions([lys], lig) == []

    def test_hydrophobic_contact(self):
        lig = parse_smiles("CCC").with_coords(
            [[0, 0, 0], [1.54, 0, 0], [3.08, 0, 0]])
        leu = res("LEU", 5, [("CD1", "C", (0.0, 4.0, 0.0))])
        records = detect_interactions([leu], lig)
        assert records[0].kind == "hydrophobic_contact"
        assert records[0].residue == "LEU5"

    def test_pi_stack_parallel(self):
        lig = benzene_at((0.0, 0.0, 3.5))
        records = detect_interactions([phe_ring(9, (0, 0, 0))], lig)
        stacks = [r for r in records if r.kind == "pi_stack"]
        assert [(r.kind, r.residue) for r in stacks] == [("pi_stack", "PHE9")]
        assert stacks[0].distance == pytest.approx(3.5)
        assert stacks[0].angle == pytest.approx(0.0, abs=1e-6)

    def test_pi_stack_intermediate_angle_rejected(self):
        ang = np.deg2rad(45)
        tilt = np.array([[1, 0, 0],
                         [0, np.cos(ang), -np.sin(ang)],
                         [0, np.sin(ang), np.cos(ang)]])
        lig = benzene_at((0.0, 0.0, 4.0))
        records = detect_interactions([phe_ring(9, (0, 0, 0), tilt)], lig)
        assert all(r.kind != "pi_stack" for r in records)

    def test_everything_far_apart_empty(self):
        lig = parse_smiles("CCO").with_coords(
            [[0, 0, 0], [1.54, 0, 0], [2.97, 0, 0]])
        far = res("SER", 2, [("OG", "O", (50.0, 50.0, 50.0))])
        assert detect_interactions([far], lig) == []

    def test_rigid_motion_invariance(self):
        lig = benzene_at((0.0, 0.0, 3.5))
        residues = [phe_ring(9, (0, 0, 0)),
                    res("ASP", 12, [("OD1", "O", (2.0, 2.0, 3.0))])]
        before = detect_interactions(residues, lig)
        rot = random_rotation_matrix(np.random.default_rng(4))
        shift = np.array([5.0, -1.0, 2.0])
        lig2 = lig.with_coords(lig.coords @ rot.T + shift)
        residues2 = [
            Residue(r.name, r.seq, r.chain, tuple(
                ResidueAtom(a.name, a.element,
                            tuple(np.asarray(a.xyz) @ rot.T + shift))
                for a in r.atoms))
            for r in residues
        ]
        after = detect_interactions(residues2, lig2)
        key = lambda recs: sorted(
            (r.kind, r.residue, r.ligand_atoms, round(r.distance, 6))
            for r in recs)
        assert key(before) == key(after)


class TestInteractionRatio:
    def rec(self, kind, residue):
        return physics.InteractionRecord(kind, residue, (0,), 3.0)

    def test_three_of_four(self):
        spec = [("hydrogen_bond", "ASP1"), ("salt_bridge", "GLU2"),
                ("pi_stack", "PHE3"), ("hydrophobic_contact", "LEU4")]
        detected = [self.rec("hydrogen_bond", "ASP1"),
                    self.rec("salt_bridge", "GLU2"),
                    self.rec("pi_stack", "PHE3")]
        assert interaction_ratio(detected, spec) == pytest.approx(0.75)

    def test_none_satisfied(self):
        spec = [("hydrogen_bond", "ASP1")]
        assert interaction_ratio([], spec) == 0.0

    def test_duplicates_count_once(self):
        spec = [("hydrogen_bond", "ASP1"), ("salt_bridge", "GLU2")]
        detected = [self.rec("hydrogen_bond", "ASP1"),
                    self.rec("hydrogen_bond", "ASP1")]
        assert interaction_ratio(detected, spec) == pytest.approx(0.5)

    def test_empty_spec_is_one(self):
        assert interaction_ratio([], ()) == 1.0

    def test_spec_loader_validation(self):
        spec = physics.load_interaction_spec(
            '[{"type": "hydrogen_bond", "residue": "SER3"}]')
        assert spec == (("hydrogen_bond", "SER3"),)
        with pytest.raises(physics.SpecError, match="unknown interaction"):
            physics.load_interaction_spec('[{"type": "covalent", "residue": "X1"}]')


class TestScore:
    def test_product_and_clamp_arithmetic(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0.0, 0.0, 0.0))])]
        prepared = PreparedPocket.from_residues(pocket, ff)
        sigma, eps = ff.lj("C")
        lig = single_atom_ligand((sigma * 2 ** (1 / 6), 0.0, 0.0))
        sm = physics.score(prepared, lig, lig.coords, (), ff)
        assert sm.delta_u == pytest.approx(-eps, abs=1e-9)
        assert sm.rho == 1.0
        assert sm.score == pytest.approx(eps, abs=1e-9)

    def test_rho_zero_means_zero(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0.0, 0.0, 0.0))])]
        prepared = PreparedPocket.from_residues(pocket, ff)
        sigma, _ = ff.lj("C")
        lig = single_atom_ligand((sigma * 2 ** (1 / 6), 0.0, 0.0))
        spec = (("hydrogen_bond", "ALA1"),)
        sm = physics.score(prepared, lig, lig.coords, spec, ff)
        assert sm.rho == 0.0
        assert sm.score == 0.0

    def test_positive_du_clamped(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0.0, 0.0, 0.0))])]
        prepared = PreparedPocket.from_residues(pocket, ff)
        sigma, _ = ff.lj("C")
        lig = single_atom_ligand((0.5 * sigma, 0.0, 0.0))
        sm = physics.score(prepared, lig, lig.coords, (), ff, max_iters=0)
        assert sm.delta_u > 0
        assert sm.score == 0.0

    def test_csv_rows(self, ff):
        pocket = [res("ALA", 1, [("CB", "C", (0.0, 0.0, 0.0))])]
        prepared = PreparedPocket.from_residues(pocket, ff)
        sigma, _ = ff.lj("C")
        lig = single_atom_ligand((sigma * 2 ** (1 / 6), 0.0, 0.0))
        sm = physics.score(prepared, lig, lig.coords, (), ff)
        rows = physics.scored_csv_rows([sm])
        assert rows[0] == ("id", "dU", "rho", "S", "interactions")
        assert rows[1][0] == "0"
        assert float(rows[1][2]) == 1.0
