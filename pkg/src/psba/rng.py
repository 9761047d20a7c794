"""Deterministic random substreams keyed by (seed, actor, ..., index)."""

from __future__ import annotations

import enum
import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def _key_word(part) -> int:
    if isinstance(part, enum.Enum):
        part = part.value
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("substream key integers must be non-negative")
        return int(part)
    if isinstance(part, str):
        # stable across processes, unlike hash()
        return int.from_bytes(hashlib.sha256(part.encode()).digest()[:8], "little")
    raise TypeError(f"unsupported substream key part {part!r}")


class Streams:
    """Factory of independent generators derived from one master seed.

    ``substream("alice", 0, 17)`` always yields the same generator for the
    same seed, regardless of how many other substreams were drawn before.
    """

    def __init__(self, seed: int):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise TypeError("seed must be an integer")
        if not 0 <= seed <= MAX_SEED:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)

    def substream(self, *key) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key_word(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"Streams(seed={self.seed})"
