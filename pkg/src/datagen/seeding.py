"""
Derived random streams.

One master seed drives the whole experiment; every consumer draws from its
own stream keyed by a fixed label offset (and a shard number where the work
is sharded), so streams are independent and reproducible.
"""

from typing import Optional

import numpy as np

from src.errors import ValidationError

STREAMS = {
    "channel": 1,
    "k_attach": 2,
    "l_attach": 3,
    "shuffle": 4,
    "init": 5,
    "test_channel": 6,
    "test_randomness": 7,
}

MAX_SEED = (1 << 64) - 1


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or not 0 <= seed <= MAX_SEED:
        raise ValidationError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


def derive_rng(seed: int, stream: str, shard: Optional[int] = None) -> np.random.Generator:
    """
    Generator for one labelled stream of a master seed.

    Args:
        seed: Master seed
        stream: Stream label (a key of STREAMS)
        shard: Optional shard number within the stream
    """
    if stream not in STREAMS:
        raise ValidationError(f"unknown random stream {stream!r}")
    key = [check_seed(seed), STREAMS[stream]]
    if shard is not None:
        key.append(int(shard))
    return np.random.default_rng(np.random.SeedSequence(key))
