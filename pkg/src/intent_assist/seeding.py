"""Deterministic random-number plumbing.

All stochastic code in this package draws from ``numpy.random.Generator``
backed by the PCG64 bit generator, seeded through ``numpy.random.SeedSequence``.
Both are stable across numpy releases under numpy's random-stream
compatibility policy, so identical seeds reproduce identical datasets
byte for byte.

Independent streams are derived by hashing a base seed together with
integer subkeys (``SeedSequence([seed, *subkeys])``), never by offsetting
seeds arithmetically.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "numpy.random.PCG64"


def rng_from(seed: int, *subkeys: int) -> np.random.Generator:
    """Generator for the stream identified by ``seed`` and optional subkeys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, subkeys)])))


def derive_seed(seed: int, *subkeys: int) -> int:
    """Collapse (seed, subkeys) into a single reproducible 64-bit seed."""
    state = np.random.SeedSequence([int(seed), *map(int, subkeys)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
