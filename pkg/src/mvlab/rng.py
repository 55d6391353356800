"""Counter-based random streams.

Every random draw in the package is keyed by ``(seed, stream, step)`` through
a Philox generator, so results are bit-for-bit reproducible and independent of
evaluation order or thread scheduling.  Within a block, row ``i`` belongs to
particle/path ``i``: permuting particles together with their noise rows
permutes results exactly.
"""

from __future__ import annotations

import numpy as np

# Stream ids; one per independent source of randomness.
STREAM_SIM = 0          # per-step simulation noise
STREAM_INIT = 1         # initial-cloud sampling
STREAM_REFERENCE = 2    # stationary reference cloud
STREAM_PAIR_INIT = 3    # second cloud of a paired simulation
STREAM_COUPLING_INIT = 4
STREAM_COUPLING_NOISE = 5
STREAM_SELFTEST = 6

_U64 = 2**64


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def generator(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream, step) cell of the noise table.

    Each cell owns a disjoint 2**128-wide counter block, so draws never
    overlap between steps regardless of how many values a step consumes.
    """
    seed = check_seed(seed)
    if step < 0:
        raise ValueError("step must be nonnegative")
    key = np.array([seed, stream], dtype=np.uint64)
    counter = np.array([0, 0, step % _U64, step // _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, stream: int, step: int, shape) -> np.ndarray:
    """Standard-normal block for one (seed, stream, step) cell."""
    return generator(seed, stream, step).standard_normal(shape)
