"""Deterministic generator streams derived from one master seed.

Replication ``r`` of an ensemble draws from ``numpy.random.default_rng``
seeded with the SplitMix64 finalizer of ``master_seed XOR r``. The mapping is a
bijection on 64-bit integers, so distinct replications never share a seed, and
it does not depend on the order in which replications are executed.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def avalanche64(x: int) -> int:
    """SplitMix64 output finalizer on a 64-bit integer."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(master_seed: int, replication: int) -> int:
    """Stable per-replication seed from one master seed."""
    if replication < 0:
        raise ValueError("replication must be non-negative")
    return avalanche64((master_seed & MASK64) ^ replication)


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    """Fresh generator for one replication."""
    return np.random.default_rng(replication_seed(master_seed, replication))
