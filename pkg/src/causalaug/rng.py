"""Seedable randomness.

Every stochastic routine takes a ``numpy.random.Generator``. Generators are
built on PCG64 (a permuted congruential generator with 128-bit state), and
child seeds are derived with ``SeedSequence`` so that independent runs
(candidate x repetition, experiment repetitions, ...) never share a stream.
"""

from __future__ import annotations

import numpy as np

RandomnessSource = np.random.Generator

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int | np.random.Generator | None = None) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is not None:
        seed = int(seed) & _SEED_MASK
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Hash ``(master_seed, *keys)`` into a fresh 64-bit seed.

    Adding keys for one run never changes the seed of another run, so e.g.
    appending SDA candidates leaves the existing candidates' runs untouched.
    """
    entropy = [int(master_seed) & _SEED_MASK, *(int(k) & _SEED_MASK for k in keys)]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    return make_rng(derive_seed(master_seed, *keys))


def spawn_seed(rng: np.random.Generator) -> int:
    """Draw a 64-bit seed from ``rng`` (used to hand sub-tasks their own stream)."""
    return int(rng.integers(0, 1 << 63, dtype=np.int64))
