"""Deterministic, splittable random-number streams.

Every stochastic element of a campaign (noise realizations, shot sampling)
draws from a child stream derived from a single master seed plus an integer
key path. Child streams are independent of the order in which they are
created, so ensembles can be generated concurrently and merged without
affecting reproducibility.
"""

from __future__ import annotations

import numpy as np

__all__ = ["child_seed_sequence", "spawn_rng", "derive_seed"]


def child_seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Derive the seed sequence for the child stream addressed by ``key``.

    The same ``(master_seed, key)`` pair always yields the same stream, and
    distinct key paths yield statistically independent streams.
    """
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))


def spawn_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Generator seeded from the child stream addressed by ``key``."""
    return np.random.default_rng(child_seed_sequence(master_seed, *key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse a child stream address into a single 64-bit integer seed."""
    state = child_seed_sequence(master_seed, *key).generate_state(1, dtype=np.uint64)
    return int(state[0])
