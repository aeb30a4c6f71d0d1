"""Scenario file key canonicalization.

Focus:
- Deterministic mapping of user-facing spellings onto the canonical config keys.
- Close-match suggestions for keys nobody recognizes.

Usage:
    from scripts.key_mapping import canon_key, suggest_key
"""
from __future__ import annotations

from typing import Dict, Optional

from rapidfuzz import fuzz, process


# Canonical keys understood by ScenarioConfig
CONFIG_KEYS = (
    "nodes_sim",
    "grid_channels",
    "grid_multiplier",
    "header_copies",
    "coding_rate",
    "payload_bytes",
    "sim_time",
    "iterations",
    "mean_interval",
    "traffic",
    "drift_sigma",
    "markov_p",
    "markov_q",
    "receiver",
    "acrda_window",
    "acrda_step",
    "hop_min_separation",
    "interval_anchor",
    "master_seed",
    "output",
    "format",
    "per_node",
    "trace",
    "workers",
)

# Keys that accept a comma-separated sweep
LIST_KEYS = {"nodes_sim"}


ALIAS_MAP: Dict[str, str] = {
    # population
    "nodes": "nodes_sim",
    "n_sim": "nodes_sim",
    "num_nodes": "nodes_sim",
    "grid": "grid_channels",
    "obw_channels": "grid_channels",
    "multiplier": "grid_multiplier",

    # transmission
    "headers": "header_copies",
    "cr": "coding_rate",
    "payload": "payload_bytes",

    # campaign
    "t": "mean_interval",
    "interval": "mean_interval",
    "duration": "sim_time",
    "horizon": "sim_time",
    "seed": "master_seed",

    # traffic
    "sigma": "drift_sigma",
    "p": "markov_p",
    "q": "markov_q",
    "anchor": "interval_anchor",
    "separation": "hop_min_separation",

    # receiver
    "window": "acrda_window",
    "step": "acrda_step",
}


def canon_key(key: str) -> str:
    """Return the canonical key for ``key``; unknown keys come back normalized but unmapped."""
    k = (key or "").strip().lower().replace("-", "_")
    if not k:
        return k
    return ALIAS_MAP.get(k, k)


def is_known(key: str) -> bool:
    return canon_key(key) in CONFIG_KEYS


def suggest_key(key: str, cutoff: float = 70.0) -> Optional[str]:
    """Closest canonical key or alias target, or None when nothing is close enough."""
    k = (key or "").strip().lower()
    if not k:
        return None
    choices = list(CONFIG_KEYS) + list(ALIAS_MAP)
    hit = process.extractOne(k, choices, scorer=fuzz.ratio, score_cutoff=cutoff)
    if hit is None:
        return None
    return canon_key(hit[0])
