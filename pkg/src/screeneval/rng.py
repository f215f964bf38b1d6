"""Deterministic named randomness substreams.

Every random choice in the toolkit flows from a single master seed through a
named substream, so individual components (sampling, bootstrap, permutation,
synthesis) can be re-run in isolation and parallel draws are schedule
independent. Substream seeds are derived by hashing, not by sharing generator
state, so the derivation is stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(seed: int, *names) -> int:
    """64-bit seed for the substream identified by (seed, *names)."""
    label = ":".join([str(int(seed))] + [str(n) for n in names])
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream_rng(seed: int, *names) -> np.random.Generator:
    """numpy Generator seeded for the named substream."""
    return np.random.default_rng(substream_seed(seed, *names))
