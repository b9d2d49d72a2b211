"""
K/L binning of the common and local randomness.

The output alphabet is cut into contiguous bins of width beta. For every
input x the common-randomness indices are split into one contiguous range
per output bin, sized by the estimated probability of that bin; inside each
bin the local-randomness indices are split again per output sequence. A
decoder that knows x, k and l can then recover a y whose law approximates
Q_hat(y | x).

Ranges are stored as boundary arrays: range i is [bounds[i], bounds[i+1]).
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from src.errors import EmptyBinError, FormatError, ValidationError
from src.probability import ConditionalPmf
from src.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

Range = Tuple[int, int]

MAGIC = b"RDFB"
VERSION = 1
_HEADER = struct.Struct("<4sHBQQQB")
_FLAG_EMPTY_K = 0x1
_FLAG_EMPTY_L = 0x2


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class BinningConfig:
    """
    Binning parameters.

    Attributes:
        beta: Number of output sequences per output bin (a power of two)
        k_size: |K|, number of common-randomness indices
        l_size: |L|, number of local-randomness indices
        allow_empty_k: Accept K-ranges of size zero
        allow_empty_l: Accept L-ranges of size zero
    """

    beta: int
    k_size: int
    l_size: int
    allow_empty_k: bool = False
    allow_empty_l: bool = True

    def __post_init__(self):
        if not _is_power_of_two(int(self.beta)):
            raise ValidationError(f"bin width must be a power of two, got {self.beta}")
        if self.k_size < 1 or self.l_size < 1:
            raise ValidationError(f"|K| and |L| must be >= 1, got {self.k_size} and {self.l_size}")

    @classmethod
    def from_rates(cls, beta: int, nr0: int, nrl: int, **flags) -> "BinningConfig":
        return cls(beta=beta, k_size=1 << nr0, l_size=1 << nrl, **flags)


def _cumulative_stops(probs: np.ndarray, size: int) -> np.ndarray:
    """
    Boundary arrays of cumulative rounding along the last axis.

    Returns an array with one more entry than probs along the last axis,
    starting at 0 and ending at size.
    """
    totals = probs.sum(axis=-1, keepdims=True)
    width = probs.shape[-1]
    safe = np.where(totals > 0, probs / np.where(totals > 0, totals, 1.0), 1.0 / width)
    stops = np.floor(size * np.cumsum(safe, axis=-1) + 0.5).astype(np.int64)
    stops = np.clip(stops, 0, size)
    stops[..., -1] = size
    stops = np.maximum.accumulate(stops, axis=-1)
    zeros = np.zeros(probs.shape[:-1] + (1,), dtype=np.int64)
    return np.concatenate([zeros, stops], axis=-1)


def _repair_empty(bounds: np.ndarray) -> Tuple[np.ndarray, int]:
    """Give every empty range one index taken from the currently largest range."""
    sizes = np.diff(bounds)
    repaired = 0
    for i in np.flatnonzero(sizes == 0):
        donor = int(np.argmax(sizes))
        if sizes[donor] <= 1:
            raise EmptyBinError(f"{len(sizes)} ranges cannot all be nonempty with {bounds[-1]} indices")
        sizes[donor] -= 1
        sizes[i] = 1
        repaired += 1
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64), repaired


def _ranges(bounds: np.ndarray) -> List[Range]:
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def allocate_proportional(probs: Sequence[float], size: int, force_nonempty: bool = False) -> List[Range]:
    """
    Split [0, size) into contiguous ranges proportional to probs.

    Range b ends at round(size * CDF_b) with half-up rounding, so each range
    size is within one index of probs_b * size and the ranges always
    partition the index set.

    Args:
        probs: Nonnegative weights summing to at most 1 (renormalised)
        size: Number of indices to distribute
        force_nonempty: Repair empty ranges by taking indices from the largest

    Returns:
        List of half-open (start, stop) ranges
    """
    weights = np.asarray(probs, dtype=np.float64)
    if size < 1:
        raise ValidationError(f"size must be >= 1, got {size}")
    if weights.ndim != 1 or weights.size == 0:
        raise ValidationError("probs must be a nonempty one-dimensional sequence")
    if np.any(weights < 0):
        raise ValidationError(f"negative probability at position {int(np.argmax(weights < 0))}")
    if weights.sum() > 1.0 + 1e-9:
        raise ValidationError(f"probabilities sum to {weights.sum()!r} > 1")
    bounds = _cumulative_stops(weights, size)
    if force_nonempty:
        bounds, _ = _repair_empty(bounds)
    return _ranges(bounds)


@dataclass(frozen=True)
class OutputBins:
    """Contiguous partition of the 2^n outputs into bins of width beta."""

    n: int
    beta: int

    @property
    def count(self) -> int:
        return (1 << self.n) // self.beta

    def bin_of(self, y):
        """Bin index of an output index or array of them."""
        return y // self.beta

    def interval(self, b: int) -> Range:
        return b * self.beta, (b + 1) * self.beta


@dataclass(frozen=True, eq=False)
class KBinning:
    """Per-x partition of [0, |K|) into one range per output bin; bounds has shape (|X|, bins + 1)."""

    size: int
    bounds: np.ndarray
    allow_empty: bool = False

    def ranges(self, x: int) -> List[Range]:
        return _ranges(self.bounds[x])

    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds, axis=1)

    def empty_count(self) -> int:
        return int((self.sizes() == 0).sum())


@dataclass(frozen=True, eq=False)
class LBinning:
    """Per-(x, b) partition of [0, |L|) over the outputs of bin b; bounds has shape (|X|, bins, beta + 1)."""

    size: int
    bounds: np.ndarray
    allow_empty: bool = True

    def ranges(self, x: int, b: int) -> List[Range]:
        return _ranges(self.bounds[x, b])

    def sizes(self) -> np.ndarray:
        return np.diff(self.bounds, axis=2)

    def empty_count(self) -> int:
        return int((self.sizes() == 0).sum())


class Binning(NamedTuple):
    """Output bins plus the K- and L-binnings built from one estimate."""

    output_bins: OutputBins
    k_bins: KBinning
    l_bins: LBinning

    @property
    def n(self) -> int:
        return self.output_bins.n

    @property
    def config(self) -> BinningConfig:
        return BinningConfig(
            beta=self.output_bins.beta,
            k_size=self.k_bins.size,
            l_size=self.l_bins.size,
            allow_empty_k=self.k_bins.allow_empty,
            allow_empty_l=self.l_bins.allow_empty,
        )

    def k_range(self, x: int, y: int) -> Range:
        b = self.output_bins.bin_of(y)
        return int(self.k_bins.bounds[x, b]), int(self.k_bins.bounds[x, b + 1])

    def l_range(self, x: int, y: int) -> Range:
        b, j = divmod(int(y), self.output_bins.beta)
        return int(self.l_bins.bounds[x, b, j]), int(self.l_bins.bounds[x, b, j + 1])


def build_bins(qhat: ConditionalPmf, cfg: BinningConfig) -> Binning:
    """
    Build output bins and the K/L-binnings from an estimated conditional.

    Args:
        qhat: Estimated Pr[y | x]
        cfg: Binning parameters

    Returns:
        Binning(output_bins, k_bins, l_bins)

    Raises:
        ValidationError: beta does not divide 2^n
        EmptyBinError: a K-range is empty while allow_empty_k is false, or
            L-ranges cannot all be made nonempty while allow_empty_l is false
    """
    n = qhat.n
    size = 1 << n
    if cfg.beta > size or size % cfg.beta != 0:
        raise ValidationError(f"bin width {cfg.beta} does not divide |Y| = {size}")

    output_bins = OutputBins(n=n, beta=cfg.beta)
    per_bin = qhat.probs.reshape(size, output_bins.count, cfg.beta)
    bin_mass = per_bin.sum(axis=2)

    k_bounds = _cumulative_stops(bin_mass, cfg.k_size)
    k_sizes = np.diff(k_bounds, axis=1)
    if not cfg.allow_empty_k and np.any(k_sizes == 0):
        x, b = (int(i) for i in np.argwhere(k_sizes == 0)[0])
        raise EmptyBinError(
            f"empty K-bin for x={x}, output bin b={b} (mass {bin_mass[x, b]:.3g}, |K|={cfg.k_size})", x=x, b=b
        )

    l_bounds = _cumulative_stops(per_bin, cfg.l_size)
    repaired = 0
    if not cfg.allow_empty_l:
        empty_rows = np.argwhere(np.any(np.diff(l_bounds, axis=2) == 0, axis=2))
        for x, b in empty_rows:
            try:
                l_bounds[x, b], count = _repair_empty(l_bounds[x, b])
            except EmptyBinError as e:
                raise EmptyBinError(f"x={x}, b={b}: {e}", x=int(x), b=int(b)) from e
            repaired += count

    bins = Binning(
        output_bins,
        KBinning(cfg.k_size, _readonly(k_bounds), cfg.allow_empty_k),
        LBinning(cfg.l_size, _readonly(l_bounds), cfg.allow_empty_l),
    )
    logger.info(
        f"Built bins: n={n}, beta={cfg.beta}, {output_bins.count} output bins, |K|={cfg.k_size}, "
        f"|L|={cfg.l_size}, empty K-ranges={bins.k_bins.empty_count()}, "
        f"empty L-ranges={bins.l_bins.empty_count()}, repaired L-ranges={repaired}"
    )
    return bins


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _check_partition(bounds: np.ndarray, size: int, what: str) -> None:
    if np.any(bounds[..., 0] != 0) or np.any(bounds[..., -1] != size) or np.any(np.diff(bounds, axis=-1) < 0):
        raise FormatError(f"{what} boundaries do not partition [0, {size})")


def bins_to_bytes(bins: Binning) -> bytes:
    """Serialise bins: header, then K and L boundaries as little-endian u64."""
    cfg = bins.config
    flags = (_FLAG_EMPTY_K if cfg.allow_empty_k else 0) | (_FLAG_EMPTY_L if cfg.allow_empty_l else 0)
    header = _HEADER.pack(MAGIC, VERSION, bins.n, cfg.beta, cfg.k_size, cfg.l_size, flags)
    return header + bins.k_bins.bounds.astype("<u8").tobytes() + bins.l_bins.bounds.astype("<u8").tobytes()


def bins_from_bytes(data: bytes) -> Binning:
    if len(data) < _HEADER.size:
        raise FormatError("binning file truncated before header end")
    magic, version, n, beta, k_size, l_size, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported binning file version {version}")
    if not 1 <= n <= 16 or not _is_power_of_two(beta) or beta > (1 << n):
        raise FormatError(f"invalid binning header n={n}, beta={beta}")
    size = 1 << n
    count = size // beta
    k_len, l_len = size * (count + 1), size * count * (beta + 1)
    body = np.frombuffer(data, dtype="<u8", offset=_HEADER.size)
    if body.size != k_len + l_len:
        raise FormatError(f"binning body has {body.size} entries, expected {k_len + l_len}")
    k_bounds = body[:k_len].astype(np.int64).reshape(size, count + 1)
    l_bounds = body[k_len:].astype(np.int64).reshape(size, count, beta + 1)
    _check_partition(k_bounds, k_size, "K")
    _check_partition(l_bounds, l_size, "L")
    return Binning(
        OutputBins(n=n, beta=beta),
        KBinning(k_size, _readonly(k_bounds), bool(flags & _FLAG_EMPTY_K)),
        LBinning(l_size, _readonly(l_bounds), bool(flags & _FLAG_EMPTY_L)),
    )


def save_bins(bins: Binning, path: Union[str, Path]) -> Path:
    path = atomic_write_bytes(path, bins_to_bytes(bins))
    logger.info(f"Saved bins to {path}")
    return path


def load_bins(path: Union[str, Path]) -> Binning:
    return bins_from_bytes(Path(path).read_bytes())
