"""Deterministic derivation of nested random streams.

Every stochastic component draws from a generator derived from a master seed
plus a path of tags (layer index, clustering index, run index, stage name).
Derivation goes through ``numpy.random.SeedSequence``, whose mixing is part of
numpy's stability guarantee, so execution order and worker count can never
change which stream a component sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    value = int(part)
    if value < 0:
        raise ValueError(f"seed path entries must be non-negative, got {value}")
    return value


def seed_sequence(*path: int | str) -> np.random.SeedSequence:
    """SeedSequence for a (master seed, tag, tag, ...) derivation path."""
    if not path:
        raise ValueError("empty seed path")
    return np.random.SeedSequence([_key(p) for p in path])


def make_rng(*path: int | str) -> np.random.Generator:
    """PCG64 generator for a derivation path."""
    return np.random.default_rng(seed_sequence(*path))


def derive_seed(*path: int | str) -> int:
    """Collapse a derivation path to a single recordable integer seed."""
    return int(seed_sequence(*path).generate_state(1, np.uint64)[0])
