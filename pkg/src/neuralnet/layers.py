"""
Activations, weight initialisation and the vector quantizer.
"""

from typing import Tuple, Union

import numpy as np

from src.errors import NonFiniteError, ValidationError

_VQ_CHUNK = 4096


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def activation_grad(name: str, out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-activation, given the activation output."""
    if name == "relu":
        return grad_out * (out > 0)
    if name == "sigmoid":
        return grad_out * out * (1.0 - out)
    raise ValidationError(f"no elementwise gradient for activation {name!r}")


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def ensure_finite(values: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite activation at {where}")
    return values


def int_to_bits(values: np.ndarray, width: int, dtype=np.float64) -> np.ndarray:
    """Binary expansion, most significant bit first; width 0 gives an empty feature."""
    values = np.asarray(values, dtype=np.int64)
    if width == 0:
        return np.zeros((values.size, 0), dtype=dtype)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts) & 1).astype(dtype)


def one_hot(values: np.ndarray, size: int, dtype=np.float64) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros((values.size, size), dtype=dtype)
    out[np.arange(values.size), values] = 1
    return out


def corner_codebook(dim: int, dtype=np.float64) -> np.ndarray:
    """All 2^dim corners of the unit hypercube; entry i is the expansion of i."""
    return int_to_bits(np.arange(1 << dim), dim, dtype=dtype)


def vq_quantize_batch(j_tilde: np.ndarray, codebook: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nearest codebook point (Euclidean) for every row; ties go to the lowest index.

    Returns:
        (quantized rows, codebook indices)
    """
    if j_tilde.ndim != 2 or j_tilde.shape[1] != codebook.shape[1]:
        raise ValidationError(f"latent shape {j_tilde.shape} does not match codebook dimension {codebook.shape[1]}")
    idx = np.empty(j_tilde.shape[0], dtype=np.int64)
    for start in range(0, j_tilde.shape[0], _VQ_CHUNK):
        rows = j_tilde[start:start + _VQ_CHUNK]
        dist = ((rows[:, None, :] - codebook[None, :, :]) ** 2).sum(axis=2)
        idx[start:start + _VQ_CHUNK] = np.argmin(dist, axis=1)
    return codebook[idx].astype(j_tilde.dtype, copy=True), idx


def vq_quantize(j_tilde: np.ndarray, codebook: np.ndarray) -> Tuple[np.ndarray, Union[int, np.ndarray]]:
    """Quantize one latent vector (or a batch of them) to the codebook."""
    j_tilde = np.asarray(j_tilde, dtype=codebook.dtype)
    if j_tilde.ndim == 1:
        points, idx = vq_quantize_batch(j_tilde[None, :], codebook)
        return points[0], int(idx[0])
    return vq_quantize_batch(j_tilde, codebook)
