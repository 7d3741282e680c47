"""Seeded, counter-based random streams.

Every random draw in the package goes through a ``numpy.random.Generator``
backed by Philox.  Independent streams are derived from ``(seed, stream)``
so that replicate ``k`` of a simulation always sees the same numbers,
regardless of how the replicates are batched.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20240101


def make_rng(seed: int | None = None, stream: int | tuple = 0) -> np.random.Generator:
    if seed is None:
        seed = DEFAULT_SEED
    key = stream if isinstance(stream, tuple) else (int(stream),)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit seed from ``rng`` for a derived family of streams."""
    return int(rng.integers(0, 2**63 - 1))


def spawn(seed: int, n: int, offset: int = 0) -> list[np.random.Generator]:
    return [make_rng(seed, offset + k) for k in range(n)]
