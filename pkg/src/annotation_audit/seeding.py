"""Deterministic seed expansion.

Every random draw in the package descends from one integer seed. A child
stream is addressed by a tuple of keys (strings or ints); strings are mapped
to 32-bit ints through SHA-256 so that the mapping is stable across runs and
platforms. The child is ``numpy.random.SeedSequence(seed, spawn_key=keys)``,
so ``derive_rng(s, "mitigate", "h1", 3)`` always yields the same stream and
distinct key tuples yield independent streams.
"""

import hashlib

import numpy as np


def _key_to_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer seed keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(seed, *keys):
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_rng(seed, *keys):
    """Return a ``numpy.random.Generator`` for the child stream ``keys``."""
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed, *keys):
    """Return a 32-bit integer seed for libraries that need a plain int."""
    return int(seed_sequence(seed, *keys).generate_state(1)[0])
