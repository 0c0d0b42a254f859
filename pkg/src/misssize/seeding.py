"""Deterministic RNG stream derivation.

Every stochastic stage of a simulation run draws from its own
``numpy.random.Generator``, seeded by a 64-bit avalanche mix of the
identifying index tuple (base seed, scenario id, delta index, repeat
index, stage tag).  Streams therefore depend only on *what* is being
computed, never on scheduling or worker count.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    """One splitmix64 finalizer round (good 64-bit avalanche)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts) -> int:
    """Mix an index tuple (ints and/or strings) into a single 64-bit seed.

    Strings are folded in byte-by-byte so stage tags like ``"ampute-dev"``
    produce streams distinct from ``"ampute-target"``.
    """
    state = 0x243F6A8885A308D3  # arbitrary nonzero start
    for part in parts:
        if isinstance(part, str):
            for b in part.encode("utf-8"):
                state = _splitmix64(state ^ b)
        elif isinstance(part, (int, np.integer)):
            state = _splitmix64(state ^ (int(part) & _MASK64))
        else:
            raise TypeError(f"seed parts must be int or str, got {type(part)!r}")
    return _splitmix64(state)


def stream(*parts) -> np.random.Generator:
    """Return a fresh PCG64 generator keyed by the given index tuple."""
    return np.random.default_rng(derive_seed(*parts))
