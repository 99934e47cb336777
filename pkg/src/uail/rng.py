"""Deterministic seed derivation for independent random streams.

Every stochastic component draws from its own named stream derived from a
master seed, so adding draws to one purpose (e.g. dropout masks) never
perturbs another (e.g. noise injection). Derivation is a stable hash, not
Python's randomized ``hash``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *parts: object) -> int:
    """Derive a 64-bit stream seed from a master seed and stream labels.

    Labels may be strings or integers; the mapping is stable across runs
    and platforms.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def stream(master: int, *parts: object) -> np.random.Generator:
    """A generator seeded from the derived stream seed."""
    return np.random.default_rng(derive_seed(master, *parts))
