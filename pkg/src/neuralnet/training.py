"""
Mini-batch training loop for the RDFC autoencoder.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from src.datagen import Dataset, derive_rng
from src.errors import NonFiniteError, ValidationError
from src.neuralnet.layers import one_hot
from src.neuralnet.model import NetworkParams, backward, cce_loss, commitment_loss, encode_features, forward
from src.neuralnet.optim import AdamState, PlateauState, adam_step, plateau_update

logger = logging.getLogger(__name__)


@dataclass
class TrainingHistory:
    """Per-epoch traces: mean batch loss, learning rate in effect, mean quantization error."""

    losses: List[float] = field(default_factory=list)
    lr_trace: List[float] = field(default_factory=list)
    vq_errors: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)


class Trainer:
    """Trains NetworkParams in place with Adam and a plateau schedule."""

    def __init__(self, params: NetworkParams, config: Dict = None):
        """
        Initialize the trainer.

        Args:
            params: Network parameters (updated in place)
            config: Configuration dictionary with keys epochs, batch_size,
                lr, seed, patience, min_delta, plateau_factor, min_lr,
                commitment_beta, show_progress
        """
        self.params = params
        self.config = config or {}

        self.epochs = int(self.config.get('epochs', 20))
        self.batch_size = int(self.config.get('batch_size', 1024))
        self.seed = int(self.config.get('seed', 0))
        self.commitment_beta = float(self.config.get('commitment_beta', 0.0))
        self.show_progress = bool(self.config.get('show_progress', False))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")

        lr = float(self.config.get('lr', 1e-4))
        self.adam = AdamState.for_params(params.trainable(), lr=lr)
        self.plateau = PlateauState(
            lr=lr,
            patience=int(self.config.get('patience', 1)),
            min_delta=float(self.config.get('min_delta', 0.01)),
            factor=float(self.config.get('plateau_factor', 0.1)),
            min_lr=float(self.config.get('min_lr', 0.0)),
        )

    def train_step(self, x: np.ndarray, y: np.ndarray, k: np.ndarray, l: np.ndarray) -> Tuple[float, float]:
        """One Adam update on a batch; returns (batch loss, mean quantization error)."""
        features = encode_features(self.params.arch, x, k, l, dtype=self.params.dtype)
        targets = one_hot(y, self.params.arch.x_dim, dtype=self.params.dtype)
        y_hat, cache = forward(self.params, features)
        loss = cce_loss(targets, y_hat) + commitment_loss(cache, self.commitment_beta)
        if not math.isfinite(loss):
            raise NonFiniteError(f"non-finite training loss {loss}")
        grads = backward(self.params, cache, targets, self.commitment_beta)
        adam_step(self.params.trainable(), grads.as_list(), self.adam)
        return loss, cache.quantization_error

    def fit(self, dataset: Dataset) -> TrainingHistory:
        """
        Train for the configured number of epochs.

        Every epoch visits the records in an order drawn from the "shuffle"
        stream for that epoch; a final partial batch is dropped.

        Args:
            dataset: Training dataset matching the network's n, nR0 and nRL

        Returns:
            TrainingHistory with one entry per epoch
        """
        arch = self.params.arch
        h = dataset.header
        if (h.n, h.nr0, h.nrl) != (arch.n, arch.nr0, arch.nrl):
            raise ValidationError(
                f"dataset (n={h.n}, nR0={h.nr0}, nRL={h.nrl}) does not match network "
                f"(n={arch.n}, nR0={arch.nr0}, nRL={arch.nrl})"
            )
        if len(dataset) == 0:
            raise ValidationError("cannot train on an empty dataset")
        batch = self.batch_size
        if batch > len(dataset):
            logger.warning(f"Batch size {batch} exceeds dataset size {len(dataset)}; using {len(dataset)}")
            batch = len(dataset)
        batches = len(dataset) // batch

        history = TrainingHistory()
        logger.info(f"Training {self.epochs} epochs, {batches} batches of {batch} per epoch")
        for epoch in tqdm(range(self.epochs), desc="Training", disable=not self.show_progress):
            order = derive_rng(self.seed, "shuffle", epoch).permutation(len(dataset))
            losses, vq_errors = [], []
            for i in range(batches):
                idx = order[i * batch:(i + 1) * batch]
                loss, vq_error = self.train_step(dataset.x[idx], dataset.y[idx], dataset.k[idx], dataset.l[idx])
                losses.append(loss)
                vq_errors.append(vq_error)

            epoch_loss = float(np.mean(losses))
            history.losses.append(epoch_loss)
            history.lr_trace.append(self.adam.lr)
            history.vq_errors.append(float(np.mean(vq_errors)))
            logger.info(
                f"Epoch {epoch + 1}/{self.epochs}: loss={epoch_loss:.6f} lr={self.adam.lr:.3g} "
                f"vq_error={history.vq_errors[-1]:.4f}"
            )
            self.adam.lr = plateau_update(self.plateau, epoch_loss)
        return history
