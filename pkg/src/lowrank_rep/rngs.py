"""Random number generation helpers.

All randomness in the package flows through numpy Generators backed by the
Philox4x64-10 counter-based bit generator.  Counter-based generation gives
every (seed, stream) pair an independent stream without sequential state, so
replicate r of a study always sees the same draws no matter which replicates
ran before it (or on how many workers).

Conventions:
  * study replicate i uses the literal seed  base_seed + i;
  * internal sub-streams (restarts, starting vectors, cached integrals) are
    derived through SeedSequence spawn keys, never by reusing a raw seed.
"""

import numpy as np

__all__ = ["generator", "substream", "replicate_seed"]


def generator(seed):
    """Fresh Generator seeded directly with a nonnegative integer."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def substream(seed, *path):
    """Generator for a named sub-stream of `seed`.

    `path` is a tuple of small integers naming the consumer, e.g.
    substream(seed, 2, restart) for the restart-th k-means initialization.
    Distinct paths give statistically independent streams.
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(path)))
    )


def replicate_seed(base_seed, index):
    """Seed for replicate `index` of a Monte Carlo study."""
    return int(base_seed) + int(index)
