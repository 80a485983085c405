from .descriptors import (
    HBA_LIMIT,
    HBD_LIMIT,
    LOGP_LIMIT,
    MW_LIMIT,
    LipinskiResult,
    UntypedAtomWarning,
    crippen_logp,
    hydrogen_bond_acceptors,
    hydrogen_bond_donors,
    lipinski,
    load_logp_table,
    molecular_weight,
)
from .fingerprints import Fingerprint, fingerprint, tanimoto
from .plif import (
    CRITICAL_FREQUENCY,
    CriticalInteractionSet,
    critical_interactions,
    interaction_profile,
    plif_recovery,
)
from .rings import aromatic_rings, atoms_in_rings, ring_size_histogram, ring_sizes, sssr
from .scaffold import murcko_scaffold

__all__ = [
    "HBA_LIMIT",
    "HBD_LIMIT",
    "LOGP_LIMIT",
    "MW_LIMIT",
    "LipinskiResult",
    "UntypedAtomWarning",
    "crippen_logp",
    "hydrogen_bond_acceptors",
    "hydrogen_bond_donors",
    "lipinski",
    "load_logp_table",
    "molecular_weight",
    "Fingerprint",
    "fingerprint",
    "tanimoto",
    "CRITICAL_FREQUENCY",
    "CriticalInteractionSet",
    "critical_interactions",
    "interaction_profile",
    "plif_recovery",
    "aromatic_rings",
    "atoms_in_rings",
    "ring_size_histogram",
    "ring_sizes",
    "sssr",
    "murcko_scaffold",
]
