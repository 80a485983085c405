"""Heavy-atom-count balanced resampling of a molecule dataset."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..molgraph import heavy_atom_count


@dataclass(frozen=True)
class HacBins:
    """Size bins <20, 20-29, 30-39, 40-50 with sampling weights 2:3:3:2."""

    edges: tuple = (20, 30, 40, 50)
    weights: tuple = (0.2, 0.3, 0.3, 0.2)

    def __post_init__(self):
        if len(self.weights) != len(self.edges) or min(self.weights) <= 0:
            raise ValueError("need one positive weight per bin")
        total = float(sum(self.weights))
        object.__setattr__(self, "weights",
                           tuple(w / total for w in self.weights))

    def classify(self, hac: int):
        """Bin index for a heavy atom count, or None when above range."""
        if hac < self.edges[0]:
            return 0
        for b in range(1, len(self.edges)):
            if hac < self.edges[b]:
                return b
        return len(self.edges) - 1 if hac == self.edges[-1] else None


def resample_by_hac(dataset, bins: HacBins, target_size: int, seed):
    """Draw ``target_size`` molecules matching the bin weights.

    Bins with enough members are sampled without replacement, small bins
    with replacement.  If any bin is empty the weights cannot be honored
    and the sampler falls back to uniform draws over the whole dataset
    (input proportions), with a warning.
    """
    mols = list(dataset)
    if not mols:
        raise ValueError("empty dataset")
    if target_size <= 0:
        raise ValueError("target size must be positive")
    rng = np.random.default_rng(seed)

    binned = [[] for _ in bins.edges]
    for mol in mols:
        b = bins.classify(heavy_atom_count(mol))
        if b is not None:
            binned[b].append(mol)

    if any(len(b) == 0 for b in binned):
        warnings.warn("some size bins are empty; falling back to input "
                      "proportions", stacklevel=2)
        pool = [m for b in binned for m in b] or mols
        picks = rng.integers(0, len(pool), size=target_size)
        return [pool[i] for i in picks]

    # Largest-remainder apportionment so counts sum to target exactly.
    raw = np.array(bins.weights) * target_size
    counts = np.floor(raw).astype(int)
    short = target_size - counts.sum()
    for b in np.argsort(-(raw - counts))[:short]:
        counts[b] += 1

    out = []
    for b, want in enumerate(counts):
        have = binned[b]
        replace = want > len(have)
        picks = rng.choice(len(have), size=want, replace=replace)
        out.extend(have[i] for i in picks)
    return out
