"""Seed handling.

Every random stream in the package is a numpy ``PCG64`` generator built from a
``SeedSequence`` whose spawn key is a tuple of non-negative integers. Streams are
addressed by ``(seed, *keys)`` so results never depend on call order.
"""

from __future__ import annotations

import zlib

import numpy as np

SeedLike = int | np.random.Generator


def _key(k: int | str) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    if k < 0:
        raise ValueError(f"stream keys must be non-negative, got {k}")
    return int(k)


def stream(seed: int, *keys: int | str) -> np.random.Generator:
    """Independent generator for the sub-stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int | str) -> int:
    """Derive a 63-bit integer sub-seed, e.g. ``derive_seed(master, "drift")``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)
