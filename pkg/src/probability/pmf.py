"""
Dense probability tables over sequence pairs.

A JointPmf holds Pr[x, y] for blocklength-n binary sequences indexed by
their integer value, so both axes have 2^n entries. Targets, relative
frequency estimates and synthesized distributions all share this type.
All information quantities are in bits.
"""

import logging
import math
from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import entr, rel_entr

from src.errors import FormatError, SupportError, ValidationError
from src.storage import atomic_write_text

logger = logging.getLogger(__name__)

MAX_BLOCKLENGTH = 16
SUM_TOLERANCE = 1e-9
LN2 = math.log(2.0)


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _check_blocklength(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_BLOCKLENGTH:
        raise ValidationError(f"blocklength must be an integer in [1, {MAX_BLOCKLENGTH}], got {n!r}")


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint PMF Pr[x, y] of shape 2^n x 2^n."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        _check_blocklength(self.n)
        probs = _frozen(self.probs)
        size = 1 << self.n
        if probs.shape != (size, size):
            raise ValidationError(f"joint table for n={self.n} must be {size}x{size}, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("joint table has negative or non-finite entries")
        total = float(probs.sum())
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValidationError(f"joint table sums to {total!r}, expected 1")
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return 1 << self.n

    def marginal_x(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def conditional(self) -> "ConditionalPmf":
        """
        Pr[y | x]. Rows of unobserved inputs (zero marginal) are uniform.
        """
        px = self.marginal_x()
        table = np.full_like(self.probs, 1.0 / self.size)
        seen = px > 0
        table[seen] = self.probs[seen] / px[seen, None]
        return ConditionalPmf(self.n, table)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointPmf):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class ConditionalPmf:
    """Conditional PMF Pr[y | x]; every row sums to one."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        _check_blocklength(self.n)
        probs = _frozen(self.probs)
        size = 1 << self.n
        if probs.shape != (size, size):
            raise ValidationError(f"conditional table for n={self.n} must be {size}x{size}, got {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("conditional table has negative or non-finite entries")
        row_sums = probs.sum(axis=1)
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        if abs(row_sums[worst] - 1.0) > SUM_TOLERANCE:
            raise ValidationError(f"row x={worst} of conditional table sums to {row_sums[worst]!r}")
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return 1 << self.n

    def joint(self, input_pmf: Optional[np.ndarray] = None) -> JointPmf:
        """Combine with an input marginal (uniform when omitted)."""
        if input_pmf is None:
            input_pmf = np.full(self.size, 1.0 / self.size)
        input_pmf = np.asarray(input_pmf, dtype=np.float64)
        if input_pmf.shape != (self.size,):
            raise ValidationError(f"input marginal must have {self.size} entries, got {input_pmf.shape}")
        return JointPmf(self.n, input_pmf[:, None] * self.probs)


def _check_shapes(p: JointPmf, q: JointPmf) -> None:
    if p.probs.shape != q.probs.shape:
        raise ValidationError(f"shape mismatch: {p.probs.shape} vs {q.probs.shape}")


def tvd(p: JointPmf, q: JointPmf) -> float:
    """Total variation distance, half the l1 distance of the tables."""
    _check_shapes(p, q)
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


def kl_divergence(p: JointPmf, q: JointPmf) -> float:
    """
    D(p || q) in bits.

    Raises:
        SupportError: p puts mass on a cell where q is zero
    """
    _check_shapes(p, q)
    bad = (p.probs > 0) & (q.probs == 0)
    if np.any(bad):
        cell = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportError(cell, float(p.probs[cell]))
    return max(0.0, float(rel_entr(p.probs, q.probs).sum()) / LN2)


def pinsker_bound(kl_bits: float) -> float:
    """Upper bound on TVD implied by a KL divergence given in bits."""
    return math.sqrt(LN2 * kl_bits / 2.0)


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in bits of any probability array (all axes joint)."""
    return float(entr(np.asarray(probs, dtype=np.float64)).sum()) / LN2


def binary_entropy(p: float) -> float:
    return entropy(np.array([p, 1.0 - p]))


def mutual_information(joint: JointPmf, per_symbol: bool = False) -> float:
    """
    I(X;Y) = H(X) + H(Y) - H(X,Y) in bits.

    Args:
        joint: Joint PMF over blocklength-n sequences
        per_symbol: Divide the block quantity by n

    Returns:
        Mutual information, clipped at zero against rounding
    """
    info = entropy(joint.marginal_x()) + entropy(joint.marginal_y()) - entropy(joint.probs)
    info = max(0.0, info)
    return info / joint.n if per_symbol else info


def conditional_entropy_y_given_x(joint: JointPmf, per_symbol: bool = False) -> float:
    """H(Y|X) in bits."""
    value = max(0.0, entropy(joint.probs) - entropy(joint.marginal_x()))
    return value / joint.n if per_symbol else value


def hamming_distances(n: int) -> np.ndarray:
    """Matrix of Hamming distances between all pairs of n-bit integers."""
    idx = np.arange(1 << n, dtype=np.int64)
    xor = idx[:, None] ^ idx[None, :]
    dist = np.zeros_like(xor)
    for bit in range(n):
        dist += (xor >> bit) & 1
    return dist


def bsc_conditional(n: int, p: float) -> ConditionalPmf:
    """Pr[y | x] of n independent uses of a BSC(p)."""
    _check_blocklength(n)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"crossover probability must lie in [0, 1], got {p}")
    dist = hamming_distances(n)
    table = np.power(p, dist) * np.power(1.0 - p, n - dist)
    return ConditionalPmf(n, table)


def bsc_joint(n: int, p: float) -> JointPmf:
    """Joint PMF of a BSC(p) with uniform i.i.d. input."""
    return bsc_conditional(n, p).joint()


def empirical_joint_from_arrays(x: np.ndarray, y: np.ndarray, n: int) -> JointPmf:
    """Relative frequency table of paired index arrays; zero counts stay zero."""
    _check_blocklength(n)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be one-dimensional arrays of equal length")
    if x.size == 0:
        raise ValidationError("cannot build an empirical distribution from zero samples")
    size = 1 << n
    if x.min() < 0 or y.min() < 0 or x.max() >= size or y.max() >= size:
        raise ValidationError(f"sample index out of range [0, {size})")
    counts = np.bincount(x * size + y, minlength=size * size).reshape(size, size)
    return JointPmf(n, counts / float(x.size))


def empirical_joint(samples: Union[Sequence[Tuple[int, int]], np.ndarray], n: int) -> JointPmf:
    """
    Relative frequency distribution of (x, y) samples.

    Args:
        samples: Sequence of (x, y) index pairs, or an array of shape (N, 2)
        n: Blocklength

    Returns:
        Empirical JointPmf
    """
    arr = np.asarray(samples, dtype=np.int64)
    if arr.size == 0:
        raise ValidationError("cannot build an empirical distribution from zero samples")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"samples must be (x, y) pairs, got array of shape {arr.shape}")
    return empirical_joint_from_arrays(arr[:, 0], arr[:, 1], n)


def pmf_to_csv(pmf: JointPmf) -> str:
    """Render a PMF as `x,y,prob` CSV, row-major over x then y."""
    size = pmf.size
    xs, ys = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    frame = pd.DataFrame({"x": xs.ravel(), "y": ys.ravel(), "prob": pmf.probs.ravel()})
    buffer = StringIO()
    frame.to_csv(buffer, index=False, float_format="%.17g", lineterminator="\n")
    return buffer.getvalue()


def save_pmf_csv(pmf: JointPmf, path: Union[str, Path]) -> Path:
    """Write a PMF CSV atomically."""
    path = atomic_write_text(path, pmf_to_csv(pmf))
    logger.info(f"Saved PMF (n={pmf.n}) to {path}")
    return path


def load_pmf_csv(path: Union[str, Path]) -> JointPmf:
    """
    Load and validate a PMF CSV.

    Raises:
        FormatError: wrong header, row count or row order
        ValidationError: the table is not a valid JointPmf
    """
    frame = pd.read_csv(path, dtype={"x": np.int64, "y": np.int64, "prob": np.float64}, float_precision="round_trip")
    if list(frame.columns) != ["x", "y", "prob"]:
        raise FormatError(f"{path}: expected header x,y,prob, got {','.join(frame.columns)}")
    rows = len(frame)
    n = int(round(math.log2(rows) / 2)) if rows > 0 else 0
    if n < 1 or (1 << (2 * n)) != rows:
        raise FormatError(f"{path}: {rows} rows is not 4^n for any n >= 1")
    size = 1 << n
    xs, ys = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    if not (np.array_equal(frame["x"].to_numpy(), xs.ravel()) and np.array_equal(frame["y"].to_numpy(), ys.ravel())):
        raise FormatError(f"{path}: rows must be ordered row-major over x then y")
    return JointPmf(n, frame["prob"].to_numpy().reshape(size, size))
