"""Keyed random substreams.

Every random decision site draws from a generator derived from
``(seed, *keys)``; adding a new site with a new key never shifts the numbers
seen by existing sites, and two simulations that share a seed see the same
numbers at the same sites even when their control flow diverges.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    if isinstance(k, (int, np.integer)) and k >= 0:
        return int(k)
    raise TypeError(f"stream keys must be str or non-negative int, got {k!r}")


def derive(seed: int, *keys) -> int:
    """Deterministic 64-bit child seed of ``seed`` for the given keys."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(_key(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


class RngStream:
    """A seed plus a key path; ``sub`` narrows it, ``gen`` materializes it."""

    __slots__ = ("seed", "keys")

    def __init__(self, seed: int, keys: tuple = ()):
        self.seed = int(seed) & _MASK64
        self.keys = tuple(keys)
        for k in self.keys:
            _key(k)

    def sub(self, *keys) -> "RngStream":
        return RngStream(self.seed, self.keys + keys)

    def gen(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_key(k) for k in self.keys))
        return np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream({self.seed}, {self.keys!r})"
