"""Counter-based random number streams.

Every sampler takes an explicit seed (or Generator) and is deterministic.
Parallel work is split into streams keyed by (master seed, label, index)
through Philox, so results are reproducible independently of worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Generator from an int seed (Philox) or pass-through for a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required for reproducibility")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def stream_key(*parts) -> tuple[int, ...]:
    """Stable uint32 tuple from string/int labels."""
    out = []
    for p in parts:
        if isinstance(p, str):
            out.append(zlib.crc32(p.encode("utf-8")))
        else:
            out.append(int(p) & 0xFFFFFFFF)
    return tuple(out)


def stream_rng(seed: int, *parts) -> np.random.Generator:
    """Independent stream keyed by (seed, *parts)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=stream_key(*parts))
    return np.random.Generator(np.random.Philox(ss))
