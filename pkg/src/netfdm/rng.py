"""Deterministic sub-stream seeding.

All randomness in the package flows through Philox, a counter-based
generator with a documented algorithm identifier, so seeds are portable.
Sub-streams are derived from (master seed, stage name, integer indices)
via SeedSequence spawn keys; results are therefore independent of
execution order and worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

ALGORITHM = "philox4x64"


def _tag(name: str) -> int:
    # stable 32-bit tag for a stage name; crc32 is platform-independent
    return zlib.crc32(name.encode("utf-8"))


def substream(master_seed: int, stage: str, *indices: int) -> np.random.Generator:
    """Generator for the sub-stream (master_seed, stage, *indices)."""
    key = (_tag(stage),) + tuple(int(i) for i in indices)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
