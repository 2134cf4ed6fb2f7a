"""Seeded, named random streams.

Every stochastic component (weight init, dropout masks, epoch shuffling,
test balancing) draws from its own stream derived from a single run seed
and a stream name. Streams are backed by the counter-based Philox engine,
so two streams never alias and a run is reproducible from its seed alone.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(seed: int, name: str) -> int:
    """Derive a 128-bit Philox key from a run seed and a stream name."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    name_word = int.from_bytes(digest, "little")
    return (seed & _MASK64) | (name_word << 64)


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))
