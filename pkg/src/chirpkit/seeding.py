"""Deterministic seed derivation.

All randomness in the toolkit flows from one 64-bit seed. Sub-streams are
derived by hashing the seed together with string scope labels (task name,
clip id, ...) through BLAKE2b, then feeding the digest to a PCG64 bit
generator. The derivation is frozen: changing it would silently change
every generated dataset, so treat this module as append-only.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *scope: str) -> int:
    """Derive a 64-bit sub-seed from a base seed and scope labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=True))
    for part in scope:
        h.update(b"\x00")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *scope: str) -> np.random.Generator:
    """PCG64 generator for the given seed and scope."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *scope)))
