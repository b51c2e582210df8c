"""Deterministic derived seeds for parallel-safe shot sampling.

Every stochastic evaluation gets its own stream derived from the run seed and
the integer coordinates of the evaluation (epoch, purpose, pair index, weight
index, shift sign, ...). Results are then independent of scheduling order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

# purpose codes for derived streams
RESIDUAL = 1
JACOBIAN = 2
TRIAL = 3
INIT = 4
FDGD = 5
STAGE = 6


def derive_seed(*keys: int) -> int:
    """Collapse integer keys into one stable 64-bit seed."""
    entropy = [int(k) & _MASK for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded by derive_seed(*keys)."""
    return np.random.default_rng(derive_seed(*keys))
