"""
Adam optimiser and the reduce-on-plateau learning-rate schedule.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    Attributes:
        lr: Current learning rate
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator offset
        step: Number of updates applied so far
        m: First-moment accumulators, one per parameter array
        v: Second-moment accumulators, one per parameter array
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-4, **kwargs) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """
    One bias-corrected Adam update, applied in place to params.

    Args:
        params: Parameter arrays (updated in place)
        grads: Gradients, same shapes as params
        state: Optimiser state; moments are allocated on first use

    Returns:
        The same state with the step counter incremented
    """
    if len(params) != len(grads):
        raise ValidationError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValidationError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return state


@dataclass
class PlateauState:
    """
    Reduce-on-plateau bookkeeping, monitoring the epoch loss.

    An epoch improves when its loss is below best - min_delta. Once the
    number of consecutive non-improving epochs exceeds patience the
    learning rate is multiplied by factor (never below min_lr) and the
    counter restarts.
    """

    lr: float
    best: float = math.inf
    wait: int = 0
    patience: int = 1
    min_delta: float = 0.01
    factor: float = 0.1
    min_lr: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValidationError(f"plateau factor must lie in (0, 1), got {self.factor}")
        if self.patience < 0 or self.min_delta < 0:
            raise ValidationError("patience and min_delta must be >= 0")


def plateau_update(state: PlateauState, loss: float) -> float:
    """Feed one epoch loss; returns the (possibly reduced) learning rate."""
    if not math.isfinite(loss):
        raise ValidationError(f"epoch loss must be finite, got {loss}")
    if loss < state.best - state.min_delta:
        state.best = loss
        state.wait = 0
        return state.lr

    state.wait += 1
    if state.wait > state.patience:
        new_lr = max(state.lr * state.factor, state.min_lr)
        if new_lr < state.lr:
            logger.info(f"Loss plateaued at {loss:.6f} (best {state.best:.6f}); reducing lr {state.lr:.3g} -> {new_lr:.3g}")
        state.lr = new_lr
        state.wait = 0
    return state.lr
