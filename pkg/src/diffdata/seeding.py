"""Deterministic RNG stream derivation.

Every randomized operation derives its stream from (master_seed, label),
so results are independent of execution order and schedule.
"""

import hashlib

import numpy as np


def substream(seed: int, *labels) -> int:
    """Derive a 64-bit child seed from a master seed and operation labels."""
    h = hashlib.blake2s(digest_size=8)
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


def rng_for(seed: int, *labels) -> np.random.Generator:
    """Generator seeded from (master seed, labels)."""
    return np.random.default_rng(substream(seed, *labels))
