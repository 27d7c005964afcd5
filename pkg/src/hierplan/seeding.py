"""Deterministic sub-seed derivation so parallel generation is schedule-independent."""

from __future__ import annotations

import hashlib
import random

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # splitmix64 finalizer; decorrelates nearby inputs.
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, *labels: object) -> int:
    """Mix a root seed with a label path into an independent 64-bit sub-seed."""
    digest = hashlib.sha256("/".join(str(p) for p in labels).encode("utf-8")).digest()
    mixed = seed & _MASK
    for i in range(0, 32, 8):
        mixed = _splitmix64(mixed ^ int.from_bytes(digest[i : i + 8], "little"))
    return mixed


def rng_for(seed: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(seed, *labels))
