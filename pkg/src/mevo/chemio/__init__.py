from .pocket import (
    PocketError,
    PocketStructure,
    Residue,
    ResidueAtom,
    parse_pocket,
    residues_near,
)
from .resample import HacBins, resample_by_hac
from .smiles import (
    SmilesError,
    morgan_ranks,
    parse_smiles,
    read_smiles_file,
    write_smiles,
)

__all__ = [
    "PocketError",
    "PocketStructure",
    "Residue",
    "ResidueAtom",
    "parse_pocket",
    "residues_near",
    "HacBins",
    "resample_by_hac",
    "SmilesError",
    "morgan_ranks",
    "parse_smiles",
    "read_smiles_file",
    "write_smiles",
    "embed_conformer",
    "EmbedError",
]


def __getattr__(name):
    # embed pulls in the physics module; keep that import lazy so the
    # parsers stay importable on their own.
    if name in ("embed_conformer", "EmbedError"):
        from . import embed
        return getattr(embed, name)
    raise AttributeError(name)
