"""
RDFC Autoencoder

Distributed channel synthesis with common and local randomness: binning of
the randomness, training-data generation, a from-scratch vector-quantized
autoencoder and TVD evaluation against the target channel.
"""

__version__ = "0.1.0"

from . import probability
from . import binning
from . import datagen
from . import neuralnet
from . import pipeline

__all__ = [
    "probability",
    "binning",
    "datagen",
    "neuralnet",
    "pipeline",
]
