"""
Neural network module for the RDFC pipeline.

Handles the from-scratch autoencoder, its vector quantizer, optimiser and
training loop.
"""

from .layers import corner_codebook, int_to_bits, one_hot, vq_quantize, vq_quantize_batch
from .model import (
    Architecture,
    NetworkParams,
    Features,
    ForwardCache,
    Gradients,
    build_rdfc_ae,
    encode_features,
    forward,
    cce_loss,
    commitment_loss,
    backward,
    backpropagate,
    argmax_decode,
    predict,
    save_params,
    load_params,
)
from .optim import AdamState, PlateauState, adam_step, plateau_update
from .training import Trainer, TrainingHistory

__all__ = [
    'corner_codebook', 'int_to_bits', 'one_hot', 'vq_quantize', 'vq_quantize_batch', 'Architecture',
    'NetworkParams', 'Features', 'ForwardCache', 'Gradients', 'build_rdfc_ae', 'encode_features',
    'forward', 'cce_loss', 'commitment_loss', 'backward', 'backpropagate', 'argmax_decode', 'predict',
    'save_params', 'load_params', 'AdamState', 'PlateauState', 'adam_step', 'plateau_update',
    'Trainer', 'TrainingHistory',
]
