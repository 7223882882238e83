"""Reproducible random-number streams.

Every Monte Carlo component draws from a counter-based stream addressed by
``(master_seed, stream_index)``.  Stream i's output never depends on how many
sibling streams exist or in which order they run, which is what makes
ensemble results identical across worker counts.

Two families of streams are provided and kept deliberately separate:

* :func:`spawn_generator` returns a NumPy ``Generator`` on a Philox counter
  keyed by the pair, for vectorised sampling at the Python level.
* compiled kernels use a xoshiro256++ state derived from the same pair via
  SplitMix64 (see ``_prng.py``); the derivation is fixed and documented so
  results are stable across releases.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def as_seed(value) -> int:
    """Coerce ``value`` to a 64-bit master seed.

    Accepts an integer (reduced mod 2^64) or a ``numpy.random.Generator``,
    in which case one draw is consumed to derive the seed.
    """
    if isinstance(value, np.random.Generator):
        return int(value.integers(0, 1 << 63, dtype=np.uint64))
    if isinstance(value, (bool, float)):
        raise TypeError(f"seed must be an integer or Generator, got {type(value).__name__}")
    return int(value) & _MASK64


def spawn_generator(master_seed: int, stream_index: int) -> np.random.Generator:
    """NumPy Generator for stream ``stream_index`` under ``master_seed``."""
    key = np.array(
        [int(master_seed) & _MASK64, int(stream_index) & _MASK64],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
