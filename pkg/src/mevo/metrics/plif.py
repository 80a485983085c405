"""Protein-ligand interaction fingerprints: critical keys and recovery.

A profile counts geometric interaction records per (type, residue).
Across a panel of reference binders, keys seen in more than 30% of them
are "critical"; their occurrence averages over ALL binders (zero counts
included).  Recovery of a generated pose is the capped-count fraction
sum(min(P, <C>)) / sum(<C>) over critical keys.
"""

from __future__ import annotations

from dataclasses import dataclass

CRITICAL_FREQUENCY = 0.3


def interaction_profile(records) -> dict:
    """Count detection records by (interaction type, residue) key."""
    profile = {}
    for rec in records:
        key = rec.key() if hasattr(rec, "key") else tuple(rec)
        profile[key] = profile.get(key, 0) + 1
    return profile


@dataclass(frozen=True)
class CriticalInteractionSet:
    """Keys past the frequency threshold with their mean counts."""

    mean_counts: dict      # key -> <C> (> 0)
    frequencies: dict      # key -> fraction of binders showing the key
    n_binders: int

    def __len__(self):
        return len(self.mean_counts)

    def keys(self):
        return self.mean_counts.keys()


def critical_interactions(profiles) -> CriticalInteractionSet:
    """Reduce reference-binder profiles to the critical key set.

    Frequency counts binders with the key at all; the mean occurrence
    divides the total count by the full panel size, so binders lacking
    the key pull the average down.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one reference binder profile")
    n = len(profiles)
    keys = {key for profile in profiles for key in profile}
    means, freqs = {}, {}
    for key in sorted(keys):
        present = sum(1 for p in profiles if p.get(key, 0) > 0)
        freq = present / n
        if freq > CRITICAL_FREQUENCY:
            means[key] = sum(p.get(key, 0) for p in profiles) / n
            freqs[key] = freq
    return CriticalInteractionSet(means, freqs, n)


def plif_recovery(profile: dict, critical: CriticalInteractionSet) -> float:
    """Fraction of the critical interaction mass a pose reproduces."""
    if len(critical) == 0:
        raise ValueError("critical interaction set is empty")
    total = sum(critical.mean_counts.values())
    got = sum(min(profile.get(key, 0), mean)
              for key, mean in critical.mean_counts.items())
    return got / total
