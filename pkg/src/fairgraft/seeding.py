"""Named random streams derived from a single root seed.

``stream(seed, "fold", 3, "teacher")`` always yields the same generator, and
streams with different names are statistically independent. Ablation runs
that share a root seed therefore share teachers and fold plans exactly.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed: int, *names) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))


def stream(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, *names))


def child_seed(seed: int, *names) -> int:
    """Integer seed for APIs that want a plain int."""
    return int(seed_sequence(seed, *names).generate_state(1, dtype=np.uint32)[0])
