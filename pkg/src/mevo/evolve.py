"""Training-free evolutionary optimization against a pocket.

Each round samples a population under pocket conditions plus the
pharmacophores of 0-2 seed molecules drawn from the current pool,
scores every candidate with the physics pipeline, then rebuilds the
pool by grouping on (residue, interaction type) and keeping the top-k
of every group.  The incumbent best is always carried forward, so the
best-so-far score can only rise.

Determinism: every candidate slot derives its RNG from (root seed,
round, slot) and nothing else, so traces are bit-reproducible and a
killed run resumes exactly -- provided pool members serialize with full
float precision (JSON repr round-trips IEEE doubles losslessly).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chemio.embed import check_geometry
from .chemio.smiles import write_smiles
from .molgraph import AtomFeature, MolGraph, connected, valence_ok
from .pharm import ConditionSet, build_pocket_condition, extract_pharmacophores, \
    pocket_centroid, subsample_features
from .physics import (
    InteractionRecord,
    PreparedPocket,
    ScoredMolecule,
    ScoringError,
    default_forcefield,
    score,
)

SEED_COUNTS_DEFAULT = ((0, 0.2), (1, 0.5), (2, 0.3))


class EvolveError(RuntimeError):
    pass


class RoundError(EvolveError):
    """Every candidate in a round failed."""


@dataclass(frozen=True)
class EvolutionConfig:
    rounds_max: int = 50
    population: int = 64
    top_k: int = 4
    seed_counts: tuple = SEED_COUNTS_DEFAULT
    hac_min: int = 5
    hac_max: int = 20
    patience: int = 10
    root_seed: int = 0
    subsample_keep: float = 0.7
    relax_iters: int = 300
    final_top: int = 16
    threads: int = 1

    def __post_init__(self):
        if self.rounds_max < 1:
            raise ValueError("rounds_max must be at least 1")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.population < 1:
            raise ValueError("population must be at least 1")
        counts = tuple((int(k), float(p)) for k, p in self.seed_counts)
        if any(k not in (0, 1, 2) or p < 0 for k, p in counts):
            raise ValueError("seed counts must map {0,1,2} to probabilities")
        if abs(sum(p for _, p in counts) - 1.0) > 1e-9:
            raise ValueError("seed-count probabilities must sum to 1")
        object.__setattr__(self, "seed_counts", counts)
        if not 1 <= self.hac_min <= self.hac_max:
            raise ValueError("bad heavy-atom range")
        if self.patience < 1 or self.threads < 1:
            raise ValueError("patience and threads must be positive")
        if not 0.0 <= self.subsample_keep <= 1.0:
            raise ValueError("subsample_keep must lie in [0, 1]")


# -- seed pool ---------------------------------------------------------


@dataclass(frozen=True)
class SeedPool:
    """Top-k molecules per (residue, interaction-type) group plus the
    deduplicated union, both in deterministic order."""

    groups: tuple = ()     # ((key, (ScoredMolecule, ...)), ...) sorted by key
    members: tuple = ()    # deduped, sorted by (-S, HAC, smiles)

    def __len__(self):
        return len(self.members)

    def group(self, key):
        for k, mols in self.groups:
            if k == key:
                return mols
        return ()


def canonical_key(sm: ScoredMolecule) -> tuple:
    return (-sm.score, len(sm.mol.atoms), write_smiles(sm.mol))


def build_seed_pool(scored, top_k: int) -> SeedPool:
    """Group by interacting residue and type, rank, take top-k, union.

    Ranking is score descending with ties broken by fewer heavy atoms
    and then canonical SMILES, so pools are reproducible whatever order
    the candidates arrived in.
    """
    scored = list(scored)
    groups: dict = {}
    for sm in scored:
        for key in sorted({(rec.residue, rec.kind) for rec in sm.interactions}):
            groups.setdefault(key, []).append(sm)
    kept = []
    for key in sorted(groups):
        ranked = sorted(groups[key], key=canonical_key)
        kept.append((key, tuple(ranked[:top_k])))
    seen: dict = {}
    for _, mols in kept:
        for sm in mols:
            smiles = write_smiles(sm.mol)
            if smiles not in seen or canonical_key(sm) < canonical_key(seen[smiles]):
                seen[smiles] = sm
    members = tuple(sorted(seen.values(), key=canonical_key))
    return SeedPool(tuple(kept), members)


@dataclass
class EvolutionState:
    round_index: int = 0
    pool: SeedPool = field(default_factory=SeedPool)
    best: ScoredMolecule | None = None
    trace: list = field(default_factory=list)


# -- one round ---------------------------------------------------------


def _draw_seed_count(rng, counts, pool_size):
    u = float(rng.random())
    acc = 0.0
    k = 0
    for value, p in counts:
        acc += p
        if u <= acc:
            k = value
            break
    return min(k, pool_size)


def _slot_conditions(rng, state, config, pocket_features):
    """Seed selection and the merged condition set for one candidate."""
    k = _draw_seed_count(rng, config.seed_counts, len(state.pool))
    seeds = []
    if k:
        idx = rng.choice(len(state.pool.members), size=k, replace=False)
        seeds = [state.pool.members[int(i)] for i in idx]
    feats = []
    for sm in seeds:
        posed = sm.mol.with_coords(sm.pose)
        feats.extend(subsample_features(extract_pharmacophores(posed),
                                        config.subsample_keep, rng))
    cs = ConditionSet(pharmacophores=tuple(feats), pocket=tuple(pocket_features))
    return seeds, cs


def evaluate_candidate(generator, scorer, conditions, n_atoms, gen_seed):
    """Generate, filter and score one candidate; never raises."""
    try:
        mol = generator(conditions, n_atoms, gen_seed)
    except Exception as exc:   # deliberate: any generator fault skips the slot
        return None, f"generator: {exc}"
    ok, violations = valence_ok(mol)
    if not ok:
        return None, f"invalid valence: {violations[0][1]}"
    if not connected(mol):
        return None, "disconnected"
    try:
        return scorer(mol), "ok"
    except (ScoringError, FloatingPointError) as exc:
        return None, f"scorer: {exc}"


def run_round(state: EvolutionState, generator, scorer,
              config: EvolutionConfig, pocket_features,
              ledger: list | None = None, evaluate=None) -> EvolutionState:
    """One generate-score-select cycle; returns the successor state.

    ``generator(conditions, n_atoms, seed) -> MolGraph`` and
    ``scorer(mol) -> ScoredMolecule`` are injected so tests can drive
    the loop with stubs.  Failed candidates are logged and skipped; the
    round only fails if every slot does.  ``evaluate``, when given, maps
    a list of (conditions, n_atoms, seed) jobs to (result, status)
    pairs in order -- the hook the parallel driver uses.
    """
    rnd = state.round_index
    jobs = []
    for slot in range(config.population):
        rng = np.random.default_rng((config.root_seed, rnd, slot))
        n_atoms = int(rng.integers(config.hac_min, config.hac_max + 1))
        seeds, conditions = _slot_conditions(rng, state, config, pocket_features)
        gen_seed = int(rng.integers(2 ** 63))
        jobs.append((slot, seeds, conditions, n_atoms, gen_seed))

    if evaluate is None:
        results = [evaluate_candidate(generator, scorer, cs, n, gs)
                   for _, _, cs, n, gs in jobs]
    else:
        results = evaluate([(cs, n, gs) for _, _, cs, n, gs in jobs])

    scored = []
    failed = 0
    for (slot, seeds, _, n_atoms, _), (sm, status) in zip(jobs, results):
        if sm is None:
            failed += 1
        else:
            scored.append(sm)
        if ledger is not None:
            entry = {"round": rnd, "slot": slot, "n_atoms": n_atoms,
                     "status": status,
                     "seeds": [write_smiles(s.mol) for s in seeds]}
            if sm is not None:
                entry.update(smiles=write_smiles(sm.mol), s=float(sm.score),
                             delta_u=float(sm.delta_u), rho=float(sm.rho))
            ledger.append(entry)
    if not scored:
        raise RoundError(f"all {config.population} candidates failed in round {rnd}")

    candidates = list(state.pool.members) + scored
    if state.best is not None:
        candidates.append(state.best)
    pool = build_seed_pool(candidates, config.top_k)

    best = state.best
    for sm in scored:
        if best is None or sm.score > best.score:
            best = sm
    # elitism: the incumbent stays available even when it joins no group;
    # membership is by canonical structure so it survives a reload
    if best is not None:
        smiles = write_smiles(best.mol)
        if all(write_smiles(m.mol) != smiles for m in pool.members):
            members = tuple(sorted(pool.members + (best,), key=canonical_key))
            pool = SeedPool(pool.groups, members)

    scores = [float(sm.score) for sm in scored]
    row = {
        "round": rnd,
        "ok": len(scored),
        "failed": failed,
        "round_best_s": max(scores),
        "best_s": float(best.score) if best else 0.0,
        "mean_s": sum(scores) / len(scores),
        "pool_size": len(pool),
        "diversity": _mean_pairwise_distance(scored),
    }
    return EvolutionState(rnd + 1, pool, best, state.trace + [row])


def _mean_pairwise_distance(scored) -> float:
    """1 - mean pairwise Tanimoto over the round's survivors."""
    from .metrics import fingerprint, tanimoto

    if len(scored) < 2:
        return 0.0
    fps = [fingerprint(sm.mol) for sm in scored]
    total = 0.0
    pairs = 0
    for i in range(len(fps)):
        for j in range(i + 1, len(fps)):
            total += tanimoto(fps[i], fps[j])
            pairs += 1
    return 1.0 - total / pairs


# -- generator / scorer factories --------------------------------------


def make_generator(codec_params, diffusion_params, schedule, origin):
    """Sample tokens under the conditions and decode to a molecule."""
    from .codec import decode
    from .diffusion import sample

    def generator(conditions, n_atoms, seed):
        tokens = sample(n_atoms, conditions, diffusion_params, schedule,
                        seed, origin=origin)
        return decode(tokens, codec_params)

    return generator


def make_scorer(prepared: PreparedPocket, spec, ff, center, relax_iters=300):
    """Drop the (centered) molecule at the site center, relax, score."""
    center = np.asarray(center, dtype=np.float64)

    def scorer(mol):
        if mol.coords is None:
            raise ScoringError("candidate has no coordinates")
        pose = mol.coords - mol.coords.mean(axis=0) + center
        return score(prepared, mol, pose, spec, ff, max_iters=relax_iters)

    return scorer


# -- process fan-out ----------------------------------------------------
#
# Workers rebuild the generator and scorer once from picklable pieces;
# each job is then a pure function of its arguments, so results are
# identical to the sequential path regardless of worker count.

_WORKER: dict = {}


def _worker_init(prepared, spec, ff, center, relax_iters,
                 codec_params, diffusion_params, origin):
    from .diffusion import diffusion_config, schedule_from_config

    schedule = schedule_from_config(diffusion_config(diffusion_params))
    _WORKER["generator"] = make_generator(codec_params, diffusion_params,
                                          schedule, origin)
    _WORKER["scorer"] = make_scorer(prepared, spec, ff, center, relax_iters)


def _worker_eval(job):
    conditions, n_atoms, gen_seed = job
    return evaluate_candidate(_WORKER["generator"], _WORKER["scorer"],
                     conditions, n_atoms, gen_seed)


# -- multi-round driver with persistence --------------------------------


def _plateau_streak(trace) -> int:
    """Trailing rounds whose best-so-far failed to rise."""
    best_seq = [row["best_s"] for row in trace]
    stale = 0
    for i in range(len(best_seq) - 1, 0, -1):
        if best_seq[i] > best_seq[i - 1]:
            break
        stale += 1
    return stale


def drive_rounds(state: EvolutionState, do_round, config: EvolutionConfig,
                 on_round=None) -> EvolutionState:
    """Repeat rounds until rounds_max or a patience-long score plateau.

    ``do_round(state) -> (state, ledger_rows)``; ``on_round(state,
    ledger_rows)`` fires after each completed round (the persistence
    hook).  The plateau counter is recomputed from the trace so a
    resumed run continues exactly where the original would have been.
    """
    stale = _plateau_streak(state.trace)
    while state.round_index < config.rounds_max and stale < config.patience:
        before = state.best.score if state.best else None
        state, ledger = do_round(state)
        if on_round is not None:
            on_round(state, ledger)
        after = state.best.score if state.best else None
        improved = before is None or (after is not None and after > before)
        stale = 0 if improved else stale + 1
    return state


def _round_dir(out_dir: Path, rnd: int) -> Path:
    return out_dir / "rounds" / f"{rnd:03d}"


def scored_to_dict(sm: ScoredMolecule) -> dict:
    return {
        "atoms": [[a.el, int(a.h), int(a.q)] for a in sm.mol.atoms],
        "bonds": [[i, j, int(bt)] for i, j, bt in sm.mol.bond_pairs()],
        "pose": [list(map(float, row)) for row in sm.pose],
        "delta_u": float(sm.delta_u),
        "rho": float(sm.rho),
        "score": float(sm.score),
        "interactions": [[r.kind, r.residue, [int(i) for i in r.ligand_atoms],
                          float(r.distance),
                          None if r.angle is None else float(r.angle)]
                         for r in sm.interactions],
    }


def scored_from_dict(d: dict) -> ScoredMolecule:
    atoms = tuple(AtomFeature(el, h, q) for el, h, q in d["atoms"])
    n = len(atoms)
    bonds = np.zeros((n, n), dtype=np.int8)
    for i, j, bt in d["bonds"]:
        bonds[i, j] = bonds[j, i] = bt
    pose = np.array(d["pose"], dtype=np.float64)
    mol = MolGraph(atoms, bonds, pose)
    records = [InteractionRecord(k, r, tuple(la), dist, ang)
               for k, r, la, dist, ang in d["interactions"]]
    return ScoredMolecule(mol=mol, pose=pose, delta_u=d["delta_u"],
                          rho=d["rho"], score=d["score"], interactions=records)


def save_round(out_dir: Path, state: EvolutionState, ledger_rows):
    """Persist the completed round (state AFTER the round ran)."""
    rnd = state.round_index - 1
    rdir = _round_dir(out_dir, rnd)
    rdir.mkdir(parents=True, exist_ok=True)
    with open(rdir / "candidates.jsonl", "w") as fh:
        for row in ledger_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    payload = {
        "round": rnd,
        "trace": state.trace,
        "best": scored_to_dict(state.best) if state.best else None,
        "pool_members": [scored_to_dict(sm) for sm in state.pool.members],
    }
    tmp = rdir / "state.json.tmp"
    tmp.write_text(json.dumps(payload, sort_keys=True))
    tmp.rename(rdir / "state.json")


def load_latest_state(out_dir: Path) -> EvolutionState | None:
    rounds = sorted((out_dir / "rounds").glob("[0-9][0-9][0-9]")) \
        if (out_dir / "rounds").is_dir() else []
    for rdir in reversed(rounds):
        path = rdir / "state.json"
        if not path.is_file():
            continue
        payload = json.loads(path.read_text())
        members = [scored_from_dict(d) for d in payload["pool_members"]]
        # group structure is a pure function of the members
        pool = build_seed_pool(members, top_k=10 ** 9)
        pool = SeedPool(pool.groups, tuple(sorted(
            {write_smiles(sm.mol): sm for sm in members}.values(),
            key=canonical_key)))
        best = scored_from_dict(payload["best"]) if payload["best"] else None
        return EvolutionState(payload["round"] + 1, pool, best, payload["trace"])
    return None


def trace_csv_lines(trace) -> list:
    cols = ("round", "ok", "failed", "round_best_s", "best_s",
            "mean_s", "pool_size", "diversity")
    lines = [",".join(cols)]
    for row in trace:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in cols))
    return lines


def run_evolution(config: EvolutionConfig, pocket, codec_params=None,
                  diffusion_params=None, spec=(), out_dir=None,
                  generator=None, scorer=None):
    """Drive rounds to completion; returns (trace, final candidates).

    ``pocket`` is a parsed PocketStructure.  With ``out_dir`` set, every
    round writes a candidate ledger and a resumable state snapshot, and
    a cumulative ``trace.csv`` is emitted at the end; an interrupted run
    restarted with the same arguments continues from the last complete
    round and produces byte-identical outputs.  ``generator`` and
    ``scorer`` default to the sampling and physics pipelines built from
    the checkpoints; tests may substitute stubs.
    """
    from .diffusion import diffusion_config, schedule_from_config

    residues = pocket.pocket_residues()
    if not residues:
        raise EvolveError("pocket has no residues")
    pocket_features = tuple(build_pocket_condition(pocket))
    origin = pocket_centroid(pocket_features)
    center = np.concatenate([r.atom_coords() for r in residues]).mean(axis=0)
    ff = default_forcefield()
    prepared = None
    if generator is None:
        if codec_params is None or diffusion_params is None:
            raise EvolveError("checkpoints required without a generator")
        schedule = schedule_from_config(diffusion_config(diffusion_params))
        generator = make_generator(codec_params, diffusion_params,
                                   schedule, origin)
    if scorer is None:
        prepared = PreparedPocket.from_residues(residues, ff)
        scorer = make_scorer(prepared, tuple(spec), ff, center,
                             config.relax_iters)

    state = EvolutionState()
    if out_dir is not None:
        out_dir = Path(out_dir)
        resumed = load_latest_state(out_dir)
        if resumed is not None:
            state = resumed

    executor = None
    evaluate = None
    if config.threads > 1 and prepared is not None and codec_params is not None:
        import multiprocessing as mp

        executor = ProcessPoolExecutor(
            config.threads, mp_context=mp.get_context("spawn"),
            initializer=_worker_init,
            initargs=(prepared, tuple(spec), ff, center, config.relax_iters,
                      codec_params, diffusion_params, origin))
        evaluate = lambda jobs: list(executor.map(_worker_eval, jobs))

    def do_round(st):
        rows: list = []
        return run_round(st, generator, scorer, config, pocket_features,
                         rows, evaluate), rows

    on_round = None
    if out_dir is not None:
        on_round = lambda st, rows: save_round(out_dir, st, rows)

    try:
        state = drive_rounds(state, do_round, config, on_round)
    finally:
        if executor is not None:
            executor.shutdown()

    final = [sm for sm in state.pool.members
             if check_geometry(sm.mol, sm.pose, ff)[0]][:config.final_top]
    if out_dir is not None:
        (out_dir / "trace.csv").write_text(
            "\n".join(trace_csv_lines(state.trace)) + "\n")
        with open(out_dir / "final.json", "w") as fh:
            json.dump([scored_to_dict(sm) for sm in final], fh,
                      sort_keys=True, indent=1)
    return state.trace, final
