"""
Channel sampling and training/test set generation.

Channel samples are drawn in fixed-size shards, each from its own derived
stream, and concatenated in shard order; the result does not depend on how
many workers joblib uses.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from src.binning import Binning
from src.datagen.dataset import Dataset, DatasetHeader
from src.datagen.seeding import derive_rng
from src.errors import EmptyBinError, ValidationError
from src.probability import ConditionalPmf, JointPmf, bsc_conditional

logger = logging.getLogger(__name__)

DEFAULT_SHARD_SIZE = 1 << 16
_TABLE_CHUNK = 4096


class ChannelSamples(NamedTuple):
    """Paired input/output index arrays."""

    n: int
    x: np.ndarray
    y: np.ndarray

    def pairs(self) -> List[Tuple[int, int]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def __len__(self) -> int:
        return int(self.x.size)


@dataclass(frozen=True)
class BSCChannel:
    """n independent uses of a BSC(p) with uniform input."""

    n: int
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"crossover probability must lie in [0, 1], got {self.p}")

    def conditional(self) -> ConditionalPmf:
        return bsc_conditional(self.n, self.p)

    def target(self) -> JointPmf:
        return self.conditional().joint()

    def sample_inputs(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, 1 << self.n, size=count, dtype=np.int64)

    def sample_outputs(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        flips = rng.random((x.size, self.n)) < self.p
        noise = flips.astype(np.int64) @ (np.int64(1) << np.arange(self.n, dtype=np.int64))
        return x ^ noise


@dataclass(frozen=True, eq=False)
class TabularChannel:
    """Channel given by an arbitrary target joint PMF."""

    joint: JointPmf

    @property
    def n(self) -> int:
        return self.joint.n

    def conditional(self) -> ConditionalPmf:
        return self.joint.conditional()

    def target(self) -> JointPmf:
        return self.joint

    def sample_inputs(self, count: int, rng: np.random.Generator) -> np.ndarray:
        marginal = self.joint.marginal_x()
        return rng.choice(marginal.size, size=count, p=marginal / marginal.sum()).astype(np.int64)

    def sample_outputs(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.conditional().probs, axis=1)
        u = rng.random(x.size)
        y = np.empty_like(x)
        for start in range(0, x.size, _TABLE_CHUNK):
            sl = slice(start, start + _TABLE_CHUNK)
            y[sl] = (cdf[x[sl]] < u[sl, None]).sum(axis=1)
        return np.minimum(y, self.joint.size - 1)


def _sample_shard(channel, count: int, seed: int, stream: str, shard: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = derive_rng(seed, stream, shard)
    x = channel.sample_inputs(count, rng)
    return x, channel.sample_outputs(x, rng)


def sample_channel(channel, count: int, seed: int, stream: str = "channel",
                   shard_size: int = DEFAULT_SHARD_SIZE, n_jobs: int = 1) -> ChannelSamples:
    """
    Draw i.i.d. (x, y) pairs from a channel.

    Args:
        channel: BSCChannel or TabularChannel
        count: Number of pairs
        seed: Master seed
        stream: Random stream label ("channel" for training, "test_channel" for testing)
        shard_size: Records per shard
        n_jobs: joblib worker count

    Returns:
        ChannelSamples in shard order
    """
    if count < 1:
        raise ValidationError(f"sample count must be >= 1, got {count}")
    if shard_size < 1:
        raise ValidationError(f"shard size must be >= 1, got {shard_size}")
    shards = math.ceil(count / shard_size)
    sizes = [min(shard_size, count - i * shard_size) for i in range(shards)]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_sample_shard)(channel, size, seed, stream, i)
        for i, size in enumerate(tqdm(sizes, desc="Sampling channel", disable=shards < 4))
    )
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    logger.info(f"Sampled {count} channel pairs (n={channel.n}, stream={stream}, {shards} shards)")
    return ChannelSamples(channel.n, x, y)


def _log2_exact(value: int, what: str) -> int:
    bits = int(value).bit_length() - 1
    if value < 1 or (1 << bits) != value:
        raise ValidationError(f"{what} = {value} is not a power of two")
    return bits


def attach_randomness(samples: ChannelSamples, bins: Binning, seed: int, on_empty: str = "raise") -> Dataset:
    """
    Attach common and local randomness to channel samples.

    For record (x, y) with y in output bin b, k is drawn uniformly from the
    K-range of (x, b) and l uniformly from the L-range of (x, y).

    Args:
        samples: Channel pairs
        bins: Bins built from an estimate of the same channel
        seed: Master seed
        on_empty: "raise" on a record whose K- or L-range is empty, or
            "drop" to leave such records out

    Returns:
        Training Dataset

    Raises:
        EmptyBinError: a record hits an empty range and on_empty is "raise"
    """
    if on_empty not in ("raise", "drop"):
        raise ValidationError(f"on_empty must be 'raise' or 'drop', got {on_empty!r}")
    if samples.n != bins.n:
        raise ValidationError(f"samples have n={samples.n} but bins were built for n={bins.n}")
    nr0 = _log2_exact(bins.k_bins.size, "|K|")
    nrl = _log2_exact(bins.l_bins.size, "|L|")

    x, y = samples.x, samples.y
    b, j = np.divmod(y, bins.output_bins.beta)
    k_lo, k_hi = bins.k_bins.bounds[x, b], bins.k_bins.bounds[x, b + 1]
    l_lo, l_hi = bins.l_bins.bounds[x, b, j], bins.l_bins.bounds[x, b, j + 1]

    empty = (k_hi <= k_lo) | (l_hi <= l_lo)
    if np.any(empty):
        i = int(np.flatnonzero(empty)[0])
        kind = "K" if k_hi[i] <= k_lo[i] else "L"
        if on_empty == "raise":
            raise EmptyBinError(
                f"record {i} (x={int(x[i])}, y={int(y[i])}) maps to an empty {kind}-bin; "
                f"the bins do not match the sampled channel", x=int(x[i]), y=int(y[i]), b=int(b[i]),
            )
        keep = ~empty
        logger.warning(f"Dropped {int(empty.sum())} of {x.size} records that map to empty bins")
        x, y, k_lo, k_hi, l_lo, l_hi = x[keep], y[keep], k_lo[keep], k_hi[keep], l_lo[keep], l_hi[keep]

    k = derive_rng(seed, "k_attach").integers(k_lo, k_hi)
    l = derive_rng(seed, "l_attach").integers(l_lo, l_hi)
    header = DatasetHeader(n=bins.n, nr0=nr0, nrl=nrl, count=int(x.size), role="train", seed=seed)
    logger.info(f"Attached randomness to {x.size} training records")
    return Dataset(header, x, y, k, l)


def make_test_set(channel, count: int, nr0: int, nrl: int, seed: int,
                  shard_size: int = DEFAULT_SHARD_SIZE, n_jobs: int = 1) -> Dataset:
    """
    Test set: channel pairs from the test stream plus k and l uniform over
    the full alphabets, independent of everything else.
    """
    samples = sample_channel(channel, count, seed, stream="test_channel", shard_size=shard_size, n_jobs=n_jobs)
    rng = derive_rng(seed, "test_randomness")
    k = rng.integers(0, 1 << nr0, size=count, dtype=np.int64)
    l = rng.integers(0, 1 << nrl, size=count, dtype=np.int64)
    header = DatasetHeader(n=channel.n, nr0=nr0, nrl=nrl, count=count, role="test", seed=seed)
    return Dataset(header, samples.x, samples.y, k, l)


def raw_samples_dataset(samples: ChannelSamples, seed: int) -> Dataset:
    """Channel samples stored as a training dataset without randomness (k = l = 0)."""
    zeros = np.zeros(len(samples), dtype=np.int64)
    header = DatasetHeader(n=samples.n, nr0=0, nrl=0, count=len(samples), role="train", seed=seed)
    return Dataset(header, samples.x, samples.y, zeros, zeros)


def samples_from_dataset(dataset: Dataset) -> ChannelSamples:
    return ChannelSamples(dataset.header.n, dataset.x, dataset.y)
