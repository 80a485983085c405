from .forcefield import (
    COULOMB_K,
    DIELECTRIC_SLOPE,
    RESIDUE_CHARGES,
    ForceFieldParams,
    ParameterError,
    System,
    complex_system,
    default_forcefield,
    energy_and_forces,
    ligand_system,
    pocket_system,
    potential_energy,
    smear_charges,
)
from .interactions import (
    INTERACTION_TYPES,
    InteractionRecord,
    SpecError,
    detect_interactions,
    interaction_ratio,
    load_interaction_spec,
    validate_spec_residues,
)
from .relax import RelaxError, RelaxResult, max_force, relax
from .scoring import (
    PreparedPocket,
    ScoredMolecule,
    ScoringError,
    delta_u,
    score,
    scored_csv_rows,
)

__all__ = [
    "COULOMB_K",
    "DIELECTRIC_SLOPE",
    "RESIDUE_CHARGES",
    "ForceFieldParams",
    "ParameterError",
    "System",
    "complex_system",
    "default_forcefield",
    "energy_and_forces",
    "ligand_system",
    "pocket_system",
    "potential_energy",
    "smear_charges",
    "INTERACTION_TYPES",
    "InteractionRecord",
    "SpecError",
    "detect_interactions",
    "interaction_ratio",
    "load_interaction_spec",
    "validate_spec_residues",
    "RelaxError",
    "RelaxResult",
    "max_force",
    "relax",
    "PreparedPocket",
    "ScoredMolecule",
    "ScoringError",
    "delta_u",
    "score",
    "scored_csv_rows",
]
