"""Reproducible random streams derived from a master seed.

Every stochastic draw in the pipeline comes from a stream keyed by
(master seed, purpose tag, *indices) where the indices are typically a user
id, an epoch or a step index.  Streams are backed by the counter-based
Philox generator, so any stream can be re-opened independently of execution
order: worker layout never changes what a given user sees.
"""

from __future__ import annotations

import zlib

import numpy as np
from numpy.random import Generator, Philox, SeedSequence


def tag_key(tag: str) -> int:
    """Stable 32-bit key for a purpose tag (crc32, not Python's salted hash)."""
    return zlib.crc32(tag.encode("utf-8")) & 0xFFFFFFFF


def stream(master_seed: int, tag: str, *indices: int) -> Generator:
    """Open the random stream identified by (master_seed, tag, *indices).

    The same arguments always yield a generator producing the same draws,
    on any machine and in any call order.
    """
    if master_seed < 0:
        raise ValueError(f"master seed must be nonnegative, got {master_seed}")
    key = (tag_key(tag),) + tuple(int(i) & 0xFFFFFFFF for i in indices)
    return Generator(Philox(SeedSequence(entropy=master_seed, spawn_key=key)))


def user_streams(master_seed: int, tag: str, user_ids, *indices: int) -> list[Generator]:
    """Per-user streams for a batch, each independent and replayable."""
    return [stream(master_seed, tag, int(u), *indices) for u in user_ids]


def tiebreak_values(master_seed: int, user_id: int, n: int) -> np.ndarray:
    """Deterministic pseudo-random values used to break score ties in ranking."""
    return stream(master_seed, "tiebreak", user_id).random(n)
