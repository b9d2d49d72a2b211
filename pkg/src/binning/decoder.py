"""
Ideal decoder induced by the bins.

Given (x, k, l) the bins determine y uniquely: k selects the output bin b
through the K-ranges of x, and l selects the output inside b through the
L-ranges of (x, b). This is the non-neural baseline the autoencoder is
trained to imitate.
"""

import logging
from typing import Optional

import numpy as np

from src.binning.bins import Binning
from src.errors import BudgetError, ValidationError
from src.probability import JointPmf

logger = logging.getLogger(__name__)

ENUMERATION_BUDGET = 1 << 30
_CHUNK = 1 << 16


def _locate(bounds: np.ndarray, index: np.ndarray) -> np.ndarray:
    # last boundary <= index; skips over empty ranges sharing that boundary
    return (bounds <= index[:, None]).sum(axis=1) - 1


def ideal_decode_batch(x: np.ndarray, k: np.ndarray, l: np.ndarray, bins: Binning) -> np.ndarray:
    """
    Vectorised ideal decoder.

    Raises:
        ValidationError: an index lies outside its alphabet
    """
    x = np.asarray(x, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    l = np.asarray(l, dtype=np.int64)
    size = 1 << bins.n
    if np.any((x < 0) | (x >= size)):
        raise ValidationError(f"x outside [0, {size})")
    if np.any((k < 0) | (k >= bins.k_bins.size)):
        raise ValidationError(f"k outside [0, {bins.k_bins.size})")
    if np.any((l < 0) | (l >= bins.l_bins.size)):
        raise ValidationError(f"l outside [0, {bins.l_bins.size})")

    out = np.empty(x.shape, dtype=np.int64)
    beta = bins.output_bins.beta
    for start in range(0, x.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        xs, ks, ls = x[sl], k[sl], l[sl]
        # each bounds row runs from 0 to the alphabet size, so _locate lands on a nonempty range
        b = _locate(bins.k_bins.bounds[xs], ks)
        j = _locate(bins.l_bins.bounds[xs, b], ls)
        out[sl] = b * beta + j
    return out


def ideal_decode(x: int, k: int, l: int, bins: Binning) -> int:
    """Decode a single (x, k, l) triple to its output index."""
    return int(ideal_decode_batch(np.array([x]), np.array([k]), np.array([l]), bins)[0])


def induced_pmf(bins: Binning, input_pmf: Optional[np.ndarray] = None, method: str = "count",
                budget: int = ENUMERATION_BUDGET) -> JointPmf:
    """
    Exact synthesized joint distribution of the ideal decoder.

    Args:
        bins: Binning to evaluate
        input_pmf: Marginal of x (uniform when omitted)
        method: "count" multiplies range sizes; "enumerate" decodes every
            (x, k, l) and counts the outputs. Both are exact.
        budget: Maximum |X| |K| |L| for the "enumerate" method

    Returns:
        JointPmf of (x, y) under uniform K and L

    Raises:
        BudgetError: enumeration would exceed the budget
    """
    size = 1 << bins.n
    k_size, l_size = bins.k_bins.size, bins.l_bins.size
    total = size * k_size * l_size
    if method == "enumerate" and total > budget:
        raise BudgetError(f"|X||K||L| = {total} exceeds enumeration budget {budget}")
    if input_pmf is None:
        input_pmf = np.full(size, 1.0 / size)
    input_pmf = np.asarray(input_pmf, dtype=np.float64)

    if method == "count":
        k_share = bins.k_bins.sizes() / k_size
        l_share = bins.l_bins.sizes() / l_size
        conditional = (k_share[:, :, None] * l_share).reshape(size, size)
    elif method == "enumerate":
        conditional = np.zeros((size, size))
        kk, ll = np.meshgrid(np.arange(k_size), np.arange(l_size), indexing="ij")
        kk, ll = kk.ravel(), ll.ravel()
        for x in range(size):
            y = ideal_decode_batch(np.full(kk.size, x), kk, ll, bins)
            conditional[x] = np.bincount(y, minlength=size) / kk.size
    else:
        raise ValidationError(f"unknown method {method!r}")

    return JointPmf(bins.n, input_pmf[:, None] * conditional)
