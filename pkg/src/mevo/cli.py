"""Command-line entry point: training, generation, evolution, metrics.

Subcommands
    train-codec      fit the token autoencoder on a molecule file
    train-diffusion  fit the conditional denoiser over codec tokens
    generate         sample molecules against a pocket
    evolve           run the scored evolutionary loop
    metrics          descriptor/similarity report for a molecule set

Configuration is INI-style with one section per module (codec,
diffusion, evolution, physics, metrics); unknown sections or keys are
rejected.  Every run directory receives a canonical config snapshot
whose hash gates resumption.  Exit codes: 0 success, 1 runtime
failure, 2 usage or input error.  With a fixed seed all outputs are
byte-reproducible; the only timestamp lives in report metadata.
"""

from __future__ import annotations

import argparse
import configparser
import difflib
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields as dc_fields
from datetime import datetime, timezone
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .chemio import (
    PocketError,
    SmilesError,
    parse_pocket,
    read_smiles_file,
    write_smiles,
)
from .codec import (
    CapacityError,
    CodecConfig,
    codec_config,
    reconstruction_report,
    train_codec,
)
from .diffusion import DiffusionConfig, diffusion_config, make_examples, \
    schedule_from_config, train_diffusion
from .evolve import (
    EvolutionConfig,
    EvolveError,
    RoundError,
    evaluate_candidate,
    make_generator,
    make_scorer,
    run_evolution,
)
from .molgraph import AtomFeature, MolGraph, MolError
from .nn import CheckpointError, load_checkpoint, save_checkpoint
from .pharm import ConditionSet, build_pocket_condition, features_from_json, \
    pocket_centroid
from .physics import (
    PreparedPocket,
    ScoringError,
    SpecError,
    default_forcefield,
    detect_interactions,
    load_interaction_spec,
)

ARCHIVE_FORMAT = "mevo-molecules-1"


class CliError(Exception):
    """Carries the exit code alongside the message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


# -- configuration ------------------------------------------------------


@dataclass(frozen=True)
class PhysicsConfig:
    max_iters: int = 300       # scoring relaxation budget
    tolerance: float = 0.1     # max-force convergence threshold

    def __post_init__(self):
        if self.max_iters < 1 or self.tolerance <= 0:
            raise ValueError("max_iters and tolerance must be positive")


@dataclass(frozen=True)
class MetricsConfig:
    n_bits: int = 2048
    radius: int = 2

    def __post_init__(self):
        if self.n_bits < 1 or self.radius < 0:
            raise ValueError("n_bits must be positive, radius non-negative")


@dataclass(frozen=True)
class RunConfig:
    codec: CodecConfig
    diffusion: DiffusionConfig
    evolution: EvolutionConfig
    physics: PhysicsConfig
    metrics: MetricsConfig


_SECTIONS = {
    "codec": CodecConfig,
    "diffusion": DiffusionConfig,
    "evolution": EvolutionConfig,
    "physics": PhysicsConfig,
    "metrics": MetricsConfig,
}

_TRUTHY = {"1": True, "true": True, "yes": True, "on": True,
           "0": False, "false": False, "no": False, "off": False}


def _parse_seed_counts(raw: str):
    pairs = []
    for chunk in raw.replace(",", " ").split():
        k, _, p = chunk.partition(":")
        pairs.append((int(k), float(p)))
    return tuple(pairs)


def _coerce(section: str, key: str, raw: str, ftype):
    try:
        if key == "seed_counts":
            return _parse_seed_counts(raw)
        if ftype is bool:
            return _TRUTHY[raw.strip().lower()]
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is str:
            return raw.strip()
    except (KeyError, ValueError):
        raise CliError(2, f"config [{section}] {key}: cannot parse {raw!r}")
    raise CliError(2, f"config [{section}] {key}: unsupported value type")


def load_config(path=None) -> RunConfig:
    """Read the INI file (or defaults when None); reject unknown keys."""
    overrides: dict = {name: {} for name in _SECTIONS}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise CliError(2, f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise CliError(2, f"config parse error: {exc}")
        for section in parser.sections():
            if section not in _SECTIONS:
                raise CliError(2, f"config: unknown section [{section}]")
            cls = _SECTIONS[section]
            hints = get_type_hints(cls)
            known = {f.name for f in dc_fields(cls)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise CliError(
                        2, f"config [{section}]: unknown key {key!r} "
                           f"(known: {', '.join(sorted(known))})")
                overrides[section][key] = _coerce(section, key, raw,
                                                  hints[key])
    built = {}
    for section, cls in _SECTIONS.items():
        base = {f.name: getattr(cls(), f.name) for f in dc_fields(cls)}
        base.update(overrides[section])
        try:
            built[section] = cls(**base)
        except ValueError as exc:
            raise CliError(2, f"config [{section}]: {exc}")
    return RunConfig(**built)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):   # seed_counts
        return ",".join(f"{k}:{p!r}" for k, p in value)
    return str(value)


def config_snapshot(config: RunConfig) -> str:
    """Canonical INI text: every field explicit, sections and keys sorted."""
    lines = []
    for section in sorted(_SECTIONS):
        lines.append(f"[{section}]")
        sub = getattr(config, section)
        for name in sorted(f.name for f in dc_fields(sub)):
            lines.append(f"{name} = {_format_value(getattr(sub, name))}")
        lines.append("")
    return "\n".join(lines)


def config_sha256(config: RunConfig) -> str:
    return hashlib.sha256(config_snapshot(config).encode()).hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- molecule archives --------------------------------------------------


def molecule_record(mol: MolGraph, name: str = "", **extra) -> dict:
    rec = {
        "name": name,
        "smiles": write_smiles(mol),
        "atoms": [[a.el, int(a.h), int(a.q)] for a in mol.atoms],
        "bonds": [[i, j, int(bt)] for i, j, bt in mol.bond_pairs()],
        "coords": None if mol.coords is None else
                  [list(map(float, row)) for row in mol.coords],
    }
    rec.update(extra)
    return rec


def record_to_mol(rec: dict) -> MolGraph:
    atoms = tuple(AtomFeature(el, h, q) for el, h, q in rec["atoms"])
    n = len(atoms)
    bonds = np.zeros((n, n), dtype=np.int8)
    for i, j, bt in rec["bonds"]:
        bonds[i, j] = bonds[j, i] = bt
    coords = rec.get("coords")
    if coords is not None:
        coords = np.array(coords, dtype=np.float64)
    return MolGraph(atoms, bonds, coords)


def write_archive(path, records):
    payload = {"format": ARCHIVE_FORMAT, "molecules": list(records)}
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_archive(path) -> list:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(2, f"{path}: not a molecule archive ({exc})")
    if not isinstance(payload, dict) or payload.get("format") != ARCHIVE_FORMAT:
        raise CliError(2, f"{path}: unrecognised archive format")
    return payload["molecules"]


def load_molecule_file(path) -> list:
    """(record, MolGraph) pairs from an archive or a SMILES file."""
    path = Path(path)
    if path.suffix == ".json":
        records = read_archive(path)
        return [(rec, record_to_mol(rec)) for rec in records]
    pairs = []
    for mol, name in read_smiles_file(path):
        pairs.append((molecule_record(mol, name), mol))
    return pairs


def _require_file(path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CliError(2, f"{what} not found: {path}")
    return path


def _embed_missing(pairs, seed: int):
    """Give every molecule coordinates; skip ones that will not embed."""
    from .chemio.embed import EmbedError, embed_conformer

    mols, skipped = [], 0
    for i, (rec, mol) in enumerate(pairs):
        if mol.coords is None:
            try:
                mol = embed_conformer(mol, seed=seed + i)
            except (EmbedError, MolError):
                skipped += 1
                continue
        mols.append(mol)
    return mols, skipped


# -- pockets ------------------------------------------------------------


def _parse_indices(raw: str) -> list:
    out = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            lo, _, hi = chunk.partition("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            out.append(int(chunk))
    return out


def _all_residue_indices(text: str) -> list:
    seen = []
    for line in text.splitlines():
        if line.startswith("ATOM"):
            seq = int(line[22:26])
            if seq not in seen:
                seen.append(seq)
    return seen


def load_pocket(path, residues_arg=None):
    text = _require_file(path, "pocket file").read_text()
    try:
        if residues_arg:
            indices = _parse_indices(residues_arg)
        else:
            indices = _all_residue_indices(text)
        if not indices:
            raise CliError(2, f"{path}: no ATOM records")
        return parse_pocket(text, indices)
    except ValueError as exc:
        raise CliError(2, f"{path}: bad residue selection ({exc})")


def _load_spec(path):
    if path is None:
        return ()
    _require_file(path, "interaction spec")
    try:
        return load_interaction_spec(Path(path).read_text())
    except (SpecError, json.JSONDecodeError) as exc:
        raise CliError(2, f"interaction spec: {exc}")


# -- shared run-dir helpers ---------------------------------------------


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("MEVO_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise CliError(2, f"MEVO_THREADS is not an integer: {env!r}")


def write_report(out_dir: Path, payload: dict, **meta):
    payload = dict(payload)
    payload["metadata"] = {
        "written_at": datetime.now(timezone.utc).isoformat(), **meta}
    (out_dir / "report.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _load_checkpoints(directory):
    directory = Path(directory)
    codec_path = _require_file(directory / "codec.ckpt", "codec checkpoint")
    diff_path = _require_file(directory / "diffusion.ckpt",
                              "diffusion checkpoint")
    try:
        codec_params = load_checkpoint(codec_path)
        diff_params = load_checkpoint(diff_path)
    except CheckpointError as exc:
        raise CliError(2, str(exc))
    return codec_params, diff_params, codec_path, diff_path


# -- train-codec --------------------------------------------------------


def cmd_train_codec(args) -> int:
    run_cfg = load_config(args.config)
    cfg = run_cfg.codec
    data = _require_file(args.data, "data file")
    pairs = load_molecule_file(data)
    if not pairs:
        raise CliError(2, f"{data}: no molecules")
    mols, skipped = _embed_missing(pairs, cfg.seed)
    if not mols:
        raise CliError(2, f"{data}: no molecule could be embedded")

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(mols))
    n_eval = int(round(args.holdout * len(mols)))
    eval_mols = [mols[i] for i in perm[:n_eval]]
    train_mols = [mols[i] for i in perm[n_eval:]]
    if not train_mols:
        raise CliError(2, "holdout fraction leaves no training data")

    try:
        params, train_report = train_codec(train_mols, cfg)
    except CapacityError as exc:
        raise CliError(2, str(exc))
    recon = reconstruction_report(params, eval_mols or train_mols)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "codec.ckpt"
    save_checkpoint(ckpt, params)
    (out / "config.snapshot").write_text(config_snapshot(run_cfg))
    passed = (recon["categorical_accuracy"] >= cfg.accuracy_target
              and recon["mean_aligned_rmsd"] <= cfg.rmsd_target)
    write_report(out, {
        "training": train_report,
        "reconstruction": recon,
        "evaluated_on": "holdout" if eval_mols else "train",
        "counts": {"train": len(train_mols), "eval": len(eval_mols),
                   "skipped_embedding": skipped},
        "thresholds": {"accuracy": cfg.accuracy_target,
                       "rmsd": cfg.rmsd_target},
        "passed": passed,
    }, config_sha256=config_sha256(run_cfg),
       checkpoint_sha256=file_sha256(ckpt), data=str(data))
    print(f"categorical accuracy {recon['categorical_accuracy']:.4f} "
          f"(target {cfg.accuracy_target}), "
          f"mean aligned RMSD {recon['mean_aligned_rmsd']:.4f} A "
          f"(target {cfg.rmsd_target}): "
          f"{'PASS' if passed else 'FAIL'}")
    if train_report.get("aborted"):
        print("warning: training aborted early on non-finite loss",
              file=sys.stderr)
    return 0 if passed else 1


# -- train-diffusion ----------------------------------------------------


def cmd_train_diffusion(args) -> int:
    run_cfg = load_config(args.config)
    cfg = run_cfg.diffusion
    data = _require_file(args.data, "data file")
    codec_path = _require_file(args.codec, "codec checkpoint")
    try:
        codec_params = load_checkpoint(codec_path)
    except CheckpointError as exc:
        raise CliError(2, str(exc))
    ccfg = codec_config(codec_params)
    if ccfg.k_code != cfg.vocab:
        raise CliError(2, f"codec k_code={ccfg.k_code} does not match "
                          f"diffusion vocab={cfg.vocab}")
    if ccfg.max_atoms > cfg.max_atoms:
        raise CliError(2, f"codec max_atoms={ccfg.max_atoms} exceeds "
                          f"diffusion max_atoms={cfg.max_atoms}")

    pairs = load_molecule_file(data)
    mols, skipped = _embed_missing(pairs, cfg.seed)
    if not mols:
        raise CliError(2, f"{data}: no molecule could be embedded")
    examples = make_examples(mols, codec_params)
    params, train_report = train_diffusion(examples, cfg)
    params.meta["codec_sha256"] = file_sha256(codec_path)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "diffusion.ckpt"
    save_checkpoint(ckpt, params)
    (out / "config.snapshot").write_text(config_snapshot(run_cfg))
    write_report(out, {
        "training": train_report,
        "counts": {"examples": len(examples), "skipped_embedding": skipped},
    }, config_sha256=config_sha256(run_cfg),
       checkpoint_sha256=file_sha256(ckpt),
       codec_sha256=file_sha256(codec_path), data=str(data))
    drop = train_report.get("loss_drop", 0.0)
    print(f"final loss {train_report['final_loss']:.4f}, "
          f"relative drop {drop:.2f}")
    if train_report.get("aborted"):
        print("error: training aborted on non-finite loss", file=sys.stderr)
        return 1
    return 0


# -- generate -----------------------------------------------------------


def _parse_hac_range(raw, max_atoms) -> tuple:
    if raw is None:
        return 5, min(20, max_atoms)
    try:
        lo, _, hi = raw.partition(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise CliError(2, f"bad --hac-range {raw!r} (expected LO:HI)")
    if not 1 <= lo <= hi:
        raise CliError(2, f"bad --hac-range {raw!r} (need 1 <= LO <= HI)")
    if hi > max_atoms:
        raise CliError(2, f"--hac-range upper bound {hi} exceeds model "
                          f"max_atoms={max_atoms}")
    return lo, hi


def cmd_generate(args) -> int:
    run_cfg = load_config(args.config)
    codec_params, diff_params, _, _ = _load_checkpoints(args.checkpoints)
    dcfg = diffusion_config(diff_params)
    schedule = schedule_from_config(dcfg)
    lo, hi = _parse_hac_range(args.hac_range, dcfg.max_atoms)

    pocket = load_pocket(args.pocket, args.residues)
    residues = pocket.pocket_residues()
    features = tuple(build_pocket_condition(pocket))
    origin = pocket_centroid(features)
    extra = ()
    if args.pharmacophores:
        text = _require_file(args.pharmacophores, "pharmacophore file") \
            .read_text()
        try:
            extra = tuple(features_from_json(text))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CliError(2, f"pharmacophore file: {exc}")
    conditions = ConditionSet(pharmacophores=extra, pocket=features)

    spec = _load_spec(args.spec)
    ff = default_forcefield()
    prepared = PreparedPocket.from_residues(residues, ff)
    center = np.concatenate([r.atom_coords() for r in residues]).mean(axis=0)
    generator = make_generator(codec_params, diff_params, schedule, origin)
    scorer = make_scorer(prepared, spec, ff, center,
                         run_cfg.physics.max_iters)

    rng = np.random.default_rng(args.seed)
    records = []
    failures: dict = {}
    for i in range(args.n):
        n_tokens = int(rng.integers(lo, hi + 1))
        gen_seed = int(rng.integers(2 ** 63))
        sm, status = evaluate_candidate(generator, scorer, conditions,
                                        n_tokens, gen_seed)
        if sm is None:
            key = status.split(":")[0]
            failures[key] = failures.get(key, 0) + 1
            continue
        extra_cols = {}
        if spec:
            extra_cols = {"s": float(sm.score), "delta_u": float(sm.delta_u),
                          "rho": float(sm.rho)}
        records.append(molecule_record(
            sm.mol.with_coords(sm.pose), name=f"gen-{i:04d}", **extra_cols))

    stats = ", ".join(f"{k}={v}" for k, v in sorted(failures.items())) \
        or "none"
    if not records:
        raise CliError(1, f"all {args.n} samples were filtered out "
                          f"(failures: {stats})")
    write_archive(args.out, records)
    print(f"attempted {args.n}, kept {len(records)} "
          f"(failures: {stats}) -> {args.out}")
    return 0


# -- evolve -------------------------------------------------------------


def _evolve_snapshot(config: RunConfig, codec_path, diff_path) -> str:
    return (config_snapshot(config)
            + "[checkpoints]\n"
            + f"codec = {file_sha256(codec_path)}\n"
            + f"diffusion = {file_sha256(diff_path)}\n")


def _plot_trace(trace, path):
    import matplotlib

    matplotlib.use("Agg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = "mevo"
    import matplotlib.pyplot as plt

    rounds = [row["round"] for row in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rounds, [row["best_s"] for row in trace], marker="o",
            label="best so far")
    ax.plot(rounds, [row["round_best_s"] for row in trace], marker=".",
            linestyle="--", label="round best")
    ax.plot(rounds, [row["mean_s"] for row in trace], marker=".",
            linestyle=":", label="round mean")
    ax.set_xlabel("round")
    ax.set_ylabel("S")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_evolve(args) -> int:
    from dataclasses import replace

    run_cfg = load_config(args.config)
    evo = run_cfg.evolution
    if args.rounds is not None:
        evo = replace(evo, rounds_max=args.rounds)
    if args.seed is not None:
        evo = replace(evo, root_seed=args.seed)
    evo = replace(evo, threads=_resolve_threads(args))
    run_cfg = RunConfig(run_cfg.codec, run_cfg.diffusion, evo,
                        run_cfg.physics, run_cfg.metrics)

    codec_params, diff_params, codec_path, diff_path = \
        _load_checkpoints(args.checkpoints)
    pocket = load_pocket(args.pocket, args.residues)
    spec = _load_spec(args.spec)

    out = Path(args.out)
    snapshot = _evolve_snapshot(run_cfg, codec_path, diff_path)
    marker = out / "config.snapshot"
    if marker.is_file():
        stored = marker.read_text()
        if stored != snapshot:
            diff = "\n".join(difflib.unified_diff(
                stored.splitlines(), snapshot.splitlines(),
                "stored config", "requested config", lineterm=""))
            raise CliError(1, f"resume refused, config differs:\n{diff}")
        print(f"resuming run in {out}")
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        for src in (codec_path, diff_path):
            (out / "checkpoints" / src.name).write_bytes(src.read_bytes())
        marker.write_text(snapshot)

    try:
        trace, final = run_evolution(evo, pocket, codec_params, diff_params,
                                     spec=spec, out_dir=out)
    except (RoundError, EvolveError) as exc:
        raise CliError(1, str(exc))

    _plot_trace(trace, out / "trace.svg")
    write_archive(out / "candidates.json", [
        molecule_record(sm.mol.with_coords(sm.pose), name=f"final-{k:03d}",
                        s=float(sm.score), delta_u=float(sm.delta_u),
                        rho=float(sm.rho))
        for k, sm in enumerate(final)])
    write_report(out, {
        "rounds": len(trace),
        "best_s": trace[-1]["best_s"] if trace else 0.0,
        "final": [{"name": f"final-{k:03d}",
                   "smiles": write_smiles(sm.mol),
                   "s": float(sm.score)} for k, sm in enumerate(final)],
    }, config_sha256=hashlib.sha256(snapshot.encode()).hexdigest(),
       codec_sha256=file_sha256(codec_path),
       diffusion_sha256=file_sha256(diff_path))
    best = trace[-1]["best_s"] if trace else 0.0
    print(f"{len(trace)} rounds, best S {best:.4f}, "
          f"{len(final)} final candidates -> {out}")
    return 0


# -- metrics ------------------------------------------------------------

_METRICS_CTX: dict = {}


def _metrics_init(ctx):
    _METRICS_CTX.update(ctx)


def _metrics_row(item):
    from .metrics import (
        fingerprint,
        interaction_profile,
        lipinski,
        murcko_scaffold,
        plif_recovery,
        ring_size_histogram,
        tanimoto,
    )

    index, rec = item
    ctx = _METRICS_CTX
    mol = record_to_mol(rec)
    ro5 = lipinski(mol)
    rings = ring_size_histogram(mol)
    row = {
        "name": rec.get("name") or f"mol-{index:04d}",
        "smiles": rec["smiles"],
        "hac": len(mol.atoms),
        "mw": ro5.mw,
        "logp": ro5.logp,
        "hbd": ro5.hbd,
        "hba": ro5.hba,
        "ro5_violations": ro5.violations,
        "ro5_pass": int(ro5.passed),
        "rings": ";".join(f"{k}:{v}" for k, v in sorted(rings.items())),
    }
    if "s" in rec:
        row["s"] = rec["s"]
    fp = fingerprint(mol, ctx["n_bits"], ctx["radius"])
    scaffold = murcko_scaffold(mol)
    if ctx.get("ref_fps"):
        row["tanimoto_max_ref"] = max(tanimoto(fp, r) for r in ctx["ref_fps"])
        if len(scaffold.atoms) and ctx.get("ref_scaffold_fps"):
            sfp = fingerprint(scaffold, ctx["n_bits"], ctx["radius"])
            row["scaffold_tanimoto_max_ref"] = max(
                tanimoto(sfp, r) for r in ctx["ref_scaffold_fps"])
        else:
            row["scaffold_tanimoto_max_ref"] = 0.0
    if ctx.get("critical") is not None:
        if mol.coords is None:
            raise CliError(2, f"{row['name']}: no coordinates for PLIF")
        profile = interaction_profile(
            detect_interactions(ctx["residues"], mol, mol.coords))
        row["plif_recovery"] = plif_recovery(profile, ctx["critical"])
    row["ring_hist"] = rings
    return row


def _quantiles(values) -> dict:
    if not values:
        return {}
    arr = np.asarray(values, dtype=np.float64)
    q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"min": float(q[0]), "q25": float(q[1]), "median": float(q[2]),
            "q75": float(q[3]), "max": float(q[4]),
            "mean": float(arr.mean())}


def _plot_histograms(rows, out_dir):
    import matplotlib

    matplotlib.use("Agg", force=True)
    matplotlib.rcParams["svg.hashsalt"] = "mevo"
    import matplotlib.pyplot as plt

    ring_total: dict = {}
    for row in rows:
        for size, count in row["ring_hist"].items():
            ring_total[size] = ring_total.get(size, 0) + count
    panels = [
        ("ring_sizes", "ring size", "rings",
         sorted(ring_total), [ring_total[k] for k in sorted(ring_total)]),
    ]
    for key, label in (("mw", "molecular weight"), ("logp", "logP")):
        values = [row[key] for row in rows]
        counts, edges = np.histogram(values, bins=10)
        centers = 0.5 * (edges[:-1] + edges[1:])
        panels.append((f"{key}_hist", label, "molecules",
                       list(centers), list(counts)))
    written = []
    for name, xlabel, ylabel, xs, ys in panels:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if xs:
            width = (0.8 * (xs[1] - xs[0])) if len(xs) > 1 else 0.8
            ax.bar(xs, ys, width=width)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        path = out_dir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path.name)
    return written


def cmd_metrics(args) -> int:
    from .metrics import fingerprint, load_logp_table, murcko_scaffold

    cfg = load_config(args.config).metrics
    gen_pairs = load_molecule_file(_require_file(args.gen, "molecule file"))
    if not gen_pairs:
        raise CliError(2, f"{args.gen}: no molecules")

    ctx = {"n_bits": cfg.n_bits, "radius": cfg.radius}
    ref_pairs = []
    if args.ref:
        ref_pairs = load_molecule_file(_require_file(args.ref,
                                                     "reference file"))
        ctx["ref_fps"] = [fingerprint(m, cfg.n_bits, cfg.radius)
                          for _, m in ref_pairs]
        scaff_fps = []
        for _, m in ref_pairs:
            scaffold = murcko_scaffold(m)
            if len(scaffold.atoms):
                scaff_fps.append(fingerprint(scaffold, cfg.n_bits, cfg.radius))
        ctx["ref_scaffold_fps"] = scaff_fps

    if args.plif:
        if not args.pocket:
            raise CliError(2, "PLIF recovery requires --pocket")
        if not ref_pairs:
            raise CliError(2, "PLIF recovery requires --ref with poses")
        from .metrics import critical_interactions, interaction_profile

        pocket = load_pocket(args.pocket, args.residues)
        residues = pocket.pocket_residues()
        profiles = []
        for rec, mol in ref_pairs:
            if mol.coords is None:
                raise CliError(2, "reference molecules need coordinates "
                                  "for PLIF (use an archive, not SMILES)")
            profiles.append(interaction_profile(
                detect_interactions(residues, mol, mol.coords)))
        ctx["critical"] = critical_interactions(profiles)
        ctx["residues"] = residues

    items = list(enumerate(rec for rec, _ in gen_pairs))
    threads = _resolve_threads(args)
    if threads > 1:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(threads,
                                 mp_context=mp.get_context("spawn"),
                                 initializer=_metrics_init,
                                 initargs=(ctx,)) as pool:
            rows = list(pool.map(_metrics_row, items, chunksize=8))
    else:
        _METRICS_CTX.clear()
        _METRICS_CTX.update(ctx)
        rows = [_metrics_row(item) for item in items]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = [c for c in ("name", "smiles", "hac", "mw", "logp", "hbd",
                           "hba", "ro5_violations", "ro5_pass", "rings", "s",
                           "tanimoto_max_ref", "scaffold_tanimoto_max_ref",
                           "plif_recovery")
               if any(c in row for row in rows)]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(
            repr(v) if isinstance(v, float) else str(v)
            for v in (row.get(c, "") for c in columns)))
    (out / "metrics.csv").write_text("\n".join(lines) + "\n")

    ring_total: dict = {}
    for row in rows:
        for size, count in row["ring_hist"].items():
            ring_total[size] = ring_total.get(size, 0) + count
    summary = {
        "molecules": len(rows),
        "ro5_pass_fraction": sum(r["ro5_pass"] for r in rows) / len(rows),
        "ring_size_counts": {str(k): ring_total[k]
                             for k in sorted(ring_total)},
        "mw": _quantiles([r["mw"] for r in rows]),
        "logp": _quantiles([r["logp"] for r in rows]),
        "hac": _quantiles([r["hac"] for r in rows]),
        "logp_table_version": load_logp_table()["version"],
    }
    for key in ("tanimoto_max_ref", "scaffold_tanimoto_max_ref",
                "plif_recovery", "s"):
        values = [r[key] for r in rows if key in r]
        if values:
            summary[key] = _quantiles(values)
    figures = []
    if args.svg:
        figures = _plot_histograms(rows, out)
    summary["figures"] = figures
    payload = dict(summary)
    payload["metadata"] = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "gen": str(args.gen), "ref": str(args.ref) if args.ref else None}
    (out / "summary.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n")
    print(f"{len(rows)} molecules -> {out / 'metrics.csv'}")
    return 0


# -- argument parsing ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mevo",
        description="Pocket-aware molecule generation and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-codec", help="fit the token autoencoder")
    p.add_argument("--data", required=True, help="SMILES file or archive")
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--holdout", type=float, default=0.2,
                   help="fraction held out for the reconstruction report")
    p.set_defaults(func=cmd_train_codec)

    p = sub.add_parser("train-diffusion", help="fit the denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True, help="codec checkpoint path")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("generate", help="sample molecules against a pocket")
    p.add_argument("--pocket", required=True, help="PDB-subset pocket file")
    p.add_argument("--residues", default=None,
                   help="residue selection, e.g. 1-12 or 1,3,5 (default all)")
    p.add_argument("--pharmacophores", default=None,
                   help="JSON pharmacophore feature file")
    p.add_argument("--n", type=int, required=True, help="samples to attempt")
    p.add_argument("--hac-range", default=None, help="LO:HI heavy atoms")
    p.add_argument("--checkpoints", required=True,
                   help="directory with codec.ckpt and diffusion.ckpt")
    p.add_argument("--spec", default=None, help="interaction spec JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output archive path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evolve", help="run the evolutionary loop")
    p.add_argument("--pocket", required=True)
    p.add_argument("--residues", default=None)
    p.add_argument("--spec", default=None)
    p.add_argument("--rounds", type=int, default=None,
                   help="override evolution.rounds_max")
    p.add_argument("--seed", type=int, default=None,
                   help="override evolution.root_seed")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("metrics", help="descriptor and similarity report")
    p.add_argument("--gen", required=True, help="molecule archive or SMILES")
    p.add_argument("--ref", default=None, help="reference set")
    p.add_argument("--pocket", default=None)
    p.add_argument("--residues", default=None)
    p.add_argument("--plif", action="store_true",
                   help="compute PLIF recovery against --ref binders")
    p.add_argument("--svg", action="store_true",
                   help="write histogram figures")
    p.add_argument("--config", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except (SmilesError, PocketError, CheckpointError, SpecError,
            MolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScoringError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
