"""
Binning module for the RDFC pipeline.

Handles the K/L binning of common and local randomness and the ideal
decoder the bins induce.
"""

from .bins import (
    BinningConfig,
    OutputBins,
    KBinning,
    LBinning,
    Binning,
    allocate_proportional,
    build_bins,
    save_bins,
    load_bins,
)
from .decoder import ideal_decode, ideal_decode_batch, induced_pmf

__all__ = [
    'BinningConfig', 'OutputBins', 'KBinning', 'LBinning', 'Binning', 'allocate_proportional',
    'build_bins', 'save_bins', 'load_bins', 'ideal_decode', 'ideal_decode_batch', 'induced_pmf',
]
