"""Seeded, splittable random streams.

All randomness comes from numpy's Philox4x64-10 counter-based bit generator,
keyed through ``SeedSequence(master_seed, spawn_key=key)``. A stream is
therefore a pure function of ``(master_seed, key)``: replications can be
generated in any order, or in parallel, and produce the same numbers.
Gaussian variates use numpy's ``Generator.standard_normal`` (ziggurat), whose
output does not depend on how draws are chunked.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError

SEED_MASK = (1 << 64) - 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > SEED_MASK:
        raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def replication_streams(seed: int, count: int, *prefix: int) -> list[np.random.Generator]:
    """One independent stream per replication, keyed ``prefix + (r,)``."""
    return [stream(seed, *prefix, r) for r in range(count)]
