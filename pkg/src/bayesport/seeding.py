"""Seed derivation: one master seed fans out to named, indexed streams.

``stream(seed, name, *index)`` builds ``SeedSequence(seed, spawn_key=(crc32(name), *index))``,
so a component's randomness depends only on the master seed, its name and
its position (replicate, month, ...), never on what ran before it.
"""
from __future__ import annotations

import zlib

import numpy as np


def seed_sequence(seed: int, name: str, *index: int) -> np.random.SeedSequence:
    if int(seed) < 0:
        raise ValueError("seed must be nonnegative")
    key = (zlib.crc32(name.encode()),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, component name, index...)``."""
    return np.random.default_rng(seed_sequence(seed, name, *index))


def child_seed(seed: int, name: str, *index: int) -> int:
    """A 63-bit integer seed for APIs that take plain integers."""
    return int(seed_sequence(seed, name, *index).generate_state(1, np.uint64)[0] >> np.uint64(1))
