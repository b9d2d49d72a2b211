"""
The RDFC autoencoder: parameters, forward pass and backpropagation.

Encoder: [one-hot x, bits of k] -> 3 x (Dense + ReLU, width 4(2^n + nR0))
         -> Dense + Sigmoid (nR = n - 1) -> vector quantizer
Decoder: [bits of k, VQ output, bits of l] -> 5 x (Dense + ReLU,
         width 6(2^n + nR0 + nRL)) -> Dense + Softmax (2^n)

Without common randomness (nR0 = 0) the k input disappears from both the
encoder and the decoder. The quantizer codebook is fixed to the corners of
{0, 1}^nR and its gradient is the identity (straight-through).

The hidden-layer counts (3 and 5 by default) can be changed to compare
shallower or deeper networks at the same widths.
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from src.datagen.seeding import derive_rng
from src.errors import FormatError, ValidationError
from src.neuralnet.layers import (
    ACTIVATIONS,
    activation_grad,
    corner_codebook,
    ensure_finite,
    glorot_uniform,
    int_to_bits,
    one_hot,
    vq_quantize_batch,
)
from src.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

ENCODER_HIDDEN = 3
DECODER_HIDDEN = 5
MAX_DEPTH = 32
CCE_CLAMP = 1e-12

MAGIC = b"RDFM"
VERSION = 2
_HEADER = struct.Struct("<4sHBHHBBBBH")
_LAYER = struct.Struct("<IIB")
_ACT_CODES = {"relu": 0, "sigmoid": 1, "softmax": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class Architecture:
    """
    Shape of the autoencoder.

    Attributes:
        n: Blocklength
        nr0: Common-randomness bits
        nrl: Local-randomness bits
        nr: Index bits after the quantizer (n - 1 unless overridden)
        encoder_activation: Activation of the layer feeding the quantizer
        encoder_depth: Hidden ReLU layers before the quantizer layer
        decoder_depth: Hidden ReLU layers before the softmax layer
    """

    n: int
    nr0: int
    nrl: int
    nr: Optional[int] = None
    encoder_activation: str = "sigmoid"
    encoder_depth: int = ENCODER_HIDDEN
    decoder_depth: int = DECODER_HIDDEN

    def __post_init__(self):
        if not 1 <= self.n <= 16:
            raise ValidationError(f"blocklength must lie in [1, 16], got {self.n}")
        if self.nr0 < 0 or self.nrl < 0:
            raise ValidationError("randomness rates must be >= 0")
        if self.nr is None:
            object.__setattr__(self, "nr", self.n - 1)
        if not 1 <= self.nr <= 16:
            raise ValidationError(f"index bits must lie in [1, 16], got {self.nr}")
        if self.encoder_activation not in ("sigmoid", "relu"):
            raise ValidationError(f"encoder activation must be sigmoid or relu, got {self.encoder_activation!r}")
        for name in ("encoder_depth", "decoder_depth"):
            depth = getattr(self, name)
            if not 1 <= depth <= MAX_DEPTH:
                raise ValidationError(f"{name} must lie in [1, {MAX_DEPTH}], got {depth}")

    @property
    def encoder_layers(self) -> int:
        """Dense layers up to and including the one feeding the quantizer."""
        return self.encoder_depth + 1

    @property
    def x_dim(self) -> int:
        return 1 << self.n

    @property
    def encoder_width(self) -> int:
        return 4 * (self.x_dim + self.nr0)

    @property
    def decoder_width(self) -> int:
        return 6 * (self.x_dim + self.nr0 + self.nrl)

    @property
    def decoder_input(self) -> int:
        return self.nr0 + self.nr + self.nrl

    def layer_specs(self) -> List[Tuple[int, int, str]]:
        """(fan_in, fan_out, activation) for every dense layer in order."""
        ew, dw = self.encoder_width, self.decoder_width
        specs = [(self.x_dim + self.nr0, ew, "relu")]
        specs += [(ew, ew, "relu")] * (self.encoder_depth - 1)
        specs += [(ew, self.nr, self.encoder_activation)]
        specs += [(self.decoder_input, dw, "relu")]
        specs += [(dw, dw, "relu")] * (self.decoder_depth - 1)
        specs += [(dw, self.x_dim, "softmax")]
        return specs


@dataclass
class NetworkParams:
    """Trainable weights and biases plus the fixed quantizer codebook."""

    arch: Architecture
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    codebook: np.ndarray

    def __post_init__(self):
        specs = self.arch.layer_specs()
        if len(self.weights) != len(specs) or len(self.biases) != len(specs):
            raise ValidationError(f"expected {len(specs)} layers, got {len(self.weights)}")
        for i, ((fan_in, fan_out, _), w, b) in enumerate(zip(specs, self.weights, self.biases)):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValidationError(f"layer {i}: expected {(fan_in, fan_out)}, got {w.shape} / {b.shape}")
        if self.codebook.shape != (1 << self.arch.nr, self.arch.nr):
            raise ValidationError(f"codebook must be {(1 << self.arch.nr, self.arch.nr)}, got {self.codebook.shape}")

    @property
    def dtype(self):
        return self.weights[0].dtype

    def trainable(self) -> List[np.ndarray]:
        """Parameter arrays in optimiser order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def activations(self) -> List[str]:
        return [spec[2] for spec in self.arch.layer_specs()]

    def copy(self, dtype=None) -> "NetworkParams":
        dtype = dtype or self.dtype
        return NetworkParams(
            self.arch,
            [w.astype(dtype, copy=True) for w in self.weights],
            [b.astype(dtype, copy=True) for b in self.biases],
            self.codebook.astype(dtype, copy=True),
        )

    def parameter_count(self) -> int:
        return sum(p.size for p in self.trainable())


def build_rdfc_ae(n: int, nr0: int, nrl: int, seed: int, nr: Optional[int] = None,
                  encoder_activation: str = "sigmoid", encoder_depth: int = ENCODER_HIDDEN,
                  decoder_depth: int = DECODER_HIDDEN, dtype=np.float64) -> NetworkParams:
    """
    Fresh autoencoder parameters.

    Weights are Glorot-uniform from the "init" stream of the seed, biases
    are zero.
    """
    if n < 2:
        raise ValidationError(f"the autoencoder needs n >= 2, got {n}")
    arch = Architecture(n=n, nr0=nr0, nrl=nrl, nr=nr, encoder_activation=encoder_activation,
                        encoder_depth=encoder_depth, decoder_depth=decoder_depth)
    rng = derive_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out, _ in arch.layer_specs():
        weights.append(glorot_uniform(rng, fan_in, fan_out, dtype=dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    params = NetworkParams(arch, weights, biases, corner_codebook(arch.nr, dtype=dtype))
    logger.info(
        f"Built autoencoder n={n}, nR0={nr0}, nRL={nrl}, nR={arch.nr}, "
        f"depth {arch.encoder_depth}/{arch.decoder_depth}: encoder width {arch.encoder_width}, "
        f"decoder width {arch.decoder_width}, {params.parameter_count()} parameters"
    )
    return params


@dataclass
class Features:
    """Network inputs for a batch."""

    x: np.ndarray
    k: np.ndarray
    l: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]


def encode_features(arch: Architecture, x, k, l, dtype=np.float64) -> Features:
    """One-hot x, MSB-first bits of k and l."""
    return Features(
        x=one_hot(x, arch.x_dim, dtype=dtype),
        k=int_to_bits(k, arch.nr0, dtype=dtype),
        l=int_to_bits(l, arch.nrl, dtype=dtype),
    )


@dataclass
class ForwardCache:
    """Per-layer inputs and outputs kept for backpropagation."""

    inputs: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    j_tilde: Optional[np.ndarray] = None
    j: Optional[np.ndarray] = None
    vq_index: Optional[np.ndarray] = None
    y_hat: Optional[np.ndarray] = None

    @property
    def quantization_error(self) -> float:
        """Mean Euclidean distance between encoder output and quantizer output."""
        return float(np.linalg.norm(self.j_tilde - self.j, axis=1).mean())


def _dense(params: NetworkParams, i: int, a: np.ndarray, activation: str, cache: ForwardCache) -> np.ndarray:
    cache.inputs.append(a)
    out = ACTIVATIONS[activation](a @ params.weights[i] + params.biases[i])
    ensure_finite(out, f"layer {i} ({activation})")
    cache.outputs.append(out)
    return out


def forward(params: NetworkParams, features: Features, bypass_vq: bool = False) -> Tuple[np.ndarray, ForwardCache]:
    """
    Forward pass.

    Args:
        params: Network parameters
        features: Encoded (x, k, l) batch
        bypass_vq: Treat the quantizer as the identity (used for gradient checks)

    Returns:
        (softmax output, cache)
    """
    arch = params.arch
    if features.x.shape[1] != arch.x_dim or features.k.shape[1] != arch.nr0 or features.l.shape[1] != arch.nrl:
        raise ValidationError(
            f"feature widths {features.x.shape[1]}/{features.k.shape[1]}/{features.l.shape[1]} "
            f"do not match architecture {arch.x_dim}/{arch.nr0}/{arch.nrl}"
        )
    cache = ForwardCache()
    activations = params.activations()

    a = ensure_finite(np.concatenate([features.x, features.k], axis=1), "encoder input")
    for i in range(arch.encoder_layers):
        a = _dense(params, i, a, activations[i], cache)

    cache.j_tilde = a
    if bypass_vq:
        cache.j, cache.vq_index = a, None
    else:
        cache.j, cache.vq_index = vq_quantize_batch(a, params.codebook)

    a = ensure_finite(np.concatenate([features.k, cache.j, features.l], axis=1), "decoder input")
    for i in range(arch.encoder_layers, len(activations)):
        a = _dense(params, i, a, activations[i], cache)
    cache.y_hat = a
    return a, cache


def cce_loss(y_onehot: np.ndarray, y_hat: np.ndarray) -> float:
    """Categorical cross-entropy (natural log), averaged over the batch."""
    if y_onehot.shape != y_hat.shape:
        raise ValidationError(f"shape mismatch: {y_onehot.shape} vs {y_hat.shape}")
    return float(-(y_onehot * np.log(np.maximum(y_hat, CCE_CLAMP))).sum(axis=1).mean())


def commitment_loss(cache: ForwardCache, beta: float) -> float:
    if beta == 0:
        return 0.0
    return float(beta * ((cache.j_tilde - cache.j) ** 2).sum(axis=1).mean())


@dataclass
class Gradients:
    """Parameter gradients plus the two gradients around the quantizer."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    d_vq_output: np.ndarray
    d_j_tilde: np.ndarray

    def as_list(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def backpropagate(params: NetworkParams, cache: ForwardCache, d_logits: np.ndarray,
                  commitment_beta: float = 0.0) -> Gradients:
    """
    Chain rule from the gradient w.r.t. the output pre-activation.

    The gradient reaching the quantizer output is copied unchanged to the
    encoder output; the codebook gets none.
    """
    arch = params.arch
    activations = params.activations()
    last = len(activations) - 1
    if d_logits.shape != cache.outputs[last].shape:
        raise ValidationError(f"output gradient shape {d_logits.shape} does not match {cache.outputs[last].shape}")

    d_w: List[Optional[np.ndarray]] = [None] * len(activations)
    d_b: List[Optional[np.ndarray]] = [None] * len(activations)
    d_j = d_j_tilde = None
    d_a = None
    for i in range(last, -1, -1):
        if i == last:
            dz = d_logits
        else:
            dz = activation_grad(activations[i], cache.outputs[i], d_a)
        d_w[i] = cache.inputs[i].T @ dz
        d_b[i] = dz.sum(axis=0)
        d_a = dz @ params.weights[i].T
        if i == arch.encoder_layers:
            d_j = d_a[:, arch.nr0:arch.nr0 + arch.nr]
            d_j_tilde = d_j.copy()
            if commitment_beta:
                batch = d_j.shape[0]
                d_j_tilde += 2.0 * commitment_beta * (cache.j_tilde - cache.j) / batch
            d_a = d_j_tilde
    return Gradients(d_w, d_b, d_j, d_j_tilde)


def backward(params: NetworkParams, cache: ForwardCache, y_onehot: np.ndarray,
             commitment_beta: float = 0.0) -> Gradients:
    """Gradients of the mean CCE (plus optional commitment term) for a cached batch."""
    if y_onehot.shape != cache.y_hat.shape:
        raise ValidationError(f"shape mismatch: {y_onehot.shape} vs {cache.y_hat.shape}")
    d_logits = (cache.y_hat - y_onehot) / y_onehot.shape[0]
    return backpropagate(params, cache, d_logits, commitment_beta)


def argmax_decode(y_hat: np.ndarray) -> Union[int, np.ndarray]:
    """Hard decision; the lowest index wins ties."""
    y_hat = np.asarray(y_hat)
    if y_hat.ndim == 1:
        return int(np.argmax(y_hat))
    return np.argmax(y_hat, axis=1)


def predict(params: NetworkParams, x, k, l, batch_size: int = 4096) -> np.ndarray:
    """Hard-decision outputs for index arrays, evaluated in batches."""
    x, k, l = (np.asarray(v, dtype=np.int64) for v in (x, k, l))
    out = np.empty(x.size, dtype=np.int64)
    for start in range(0, x.size, batch_size):
        sl = slice(start, start + batch_size)
        features = encode_features(params.arch, x[sl], k[sl], l[sl], dtype=params.dtype)
        y_hat, _ = forward(params, features)
        out[sl] = argmax_decode(y_hat)
    return out


def params_to_bytes(params: NetworkParams) -> bytes:
    arch = params.arch
    specs = arch.layer_specs()
    enc_act = _ACT_CODES[arch.encoder_activation]
    chunks = [_HEADER.pack(MAGIC, VERSION, arch.n, arch.nr0, arch.nrl, arch.nr, enc_act,
                           arch.encoder_depth, arch.decoder_depth, len(specs))]
    for fan_in, fan_out, act in specs:
        chunks.append(_LAYER.pack(fan_in, fan_out, _ACT_CODES[act]))
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(chunks)


def params_from_bytes(data: bytes) -> NetworkParams:
    if len(data) < _HEADER.size:
        raise FormatError("model file truncated before header end")
    magic, version, n, nr0, nrl, nr, enc_act, enc_depth, dec_depth, layers = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    if enc_act not in _ACT_NAMES:
        raise FormatError(f"unknown activation code {enc_act}")
    try:
        arch = Architecture(n=n, nr0=nr0, nrl=nrl, nr=nr, encoder_activation=_ACT_NAMES[enc_act],
                            encoder_depth=enc_depth, decoder_depth=dec_depth)
    except ValidationError as e:
        raise FormatError(f"invalid architecture header: {e}") from e
    specs = arch.layer_specs()
    offset = _HEADER.size
    stored = []
    for _ in range(layers):
        if offset + _LAYER.size > len(data):
            raise FormatError("model file truncated in layer table")
        fan_in, fan_out, act = _LAYER.unpack_from(data, offset)
        stored.append((fan_in, fan_out, _ACT_NAMES.get(act)))
        offset += _LAYER.size
    if stored != specs:
        raise FormatError("layer table does not match the architecture header")

    weights, biases = [], []
    for fan_in, fan_out, _ in specs:
        count = fan_in * fan_out + fan_out
        if offset + 8 * count > len(data):
            raise FormatError("model file truncated in parameters")
        flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
        weights.append(flat[:fan_in * fan_out].reshape(fan_in, fan_out).copy())
        biases.append(flat[fan_in * fan_out:].copy())
        offset += 8 * count
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes in model file")
    return NetworkParams(arch, weights, biases, corner_codebook(arch.nr))


def save_params(params: NetworkParams, path: Union[str, Path]) -> Path:
    path = atomic_write_bytes(path, params_to_bytes(params))
    logger.info(f"Saved model ({params.parameter_count()} parameters) to {path}")
    return path


def load_params(path: Union[str, Path]) -> NetworkParams:
    return params_from_bytes(Path(path).read_bytes())
