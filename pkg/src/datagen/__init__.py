"""
Data generation module for the RDFC pipeline.

Handles channel sampling, randomness attachment and dataset storage.
"""

from .seeding import STREAMS, derive_rng, check_seed
from .dataset import SampleRecord, DatasetHeader, Dataset, save_dataset, load_dataset
from .sampling import (
    ChannelSamples,
    BSCChannel,
    TabularChannel,
    sample_channel,
    attach_randomness,
    make_test_set,
    raw_samples_dataset,
    samples_from_dataset,
)

__all__ = [
    'STREAMS', 'derive_rng', 'check_seed', 'SampleRecord', 'DatasetHeader', 'Dataset', 'save_dataset',
    'load_dataset', 'ChannelSamples', 'BSCChannel', 'TabularChannel', 'sample_channel',
    'attach_randomness', 'make_test_set', 'raw_samples_dataset', 'samples_from_dataset',
]
