"""
Evaluation of a trained autoencoder against the test estimate and the
exact target, plus heatmap output.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.datagen import Dataset
from src.errors import BudgetError, ValidationError
from src.neuralnet import NetworkParams, predict
from src.probability import JointPmf, empirical_joint_from_arrays, save_pmf_csv, tvd
from src.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

EXACT_BUDGET = 1 << 24


@dataclass(frozen=True)
class Evaluation:
    """TVD_T, TVD_G and the Monte Carlo synthesized PMF they were computed from."""

    tvd_t: float
    tvd_g: float
    synthesized: JointPmf


def evaluate(params: NetworkParams, test_set: Dataset, qhat_test: JointPmf, q_exact: JointPmf,
             batch_size: int = 4096) -> Evaluation:
    """
    Hard-decision predictions on the test set and the two TVDs.

    Args:
        params: Trained network
        test_set: Test records (x, k, l used; y ignored)
        qhat_test: Relative frequency estimate from the test set
        q_exact: Exact target PMF

    Returns:
        Evaluation with TVD_T = TVD(P, qhat_test) and TVD_G = TVD(P, q_exact)
    """
    n = params.arch.n
    if len(test_set) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    if test_set.header.n != n or qhat_test.n != n or q_exact.n != n:
        raise ValidationError(
            f"blocklengths disagree: network {n}, test set {test_set.header.n}, "
            f"estimate {qhat_test.n}, target {q_exact.n}"
        )
    y_pred = predict(params, test_set.x, test_set.k, test_set.l, batch_size=batch_size)
    synthesized = empirical_joint_from_arrays(test_set.x, y_pred, n)
    result = Evaluation(tvd(synthesized, qhat_test), tvd(synthesized, q_exact), synthesized)
    logger.info(f"Evaluated {len(test_set)} test records: TVD_T={result.tvd_t:.6f}, TVD_G={result.tvd_g:.6f}")
    return result


def exact_synth_pmf(params: NetworkParams, input_marginal: Optional[np.ndarray] = None,
                    budget: int = EXACT_BUDGET, batch_size: int = 4096) -> JointPmf:
    """
    Synthesized joint PMF by exhaustive summation over k and l.

    Every (x, k, l) is decoded with hard decisions; K and L are uniform.

    Raises:
        BudgetError: |X| |K| |L| exceeds the budget
    """
    arch = params.arch
    size, k_size, l_size = arch.x_dim, 1 << arch.nr0, 1 << arch.nrl
    total = size * k_size * l_size
    if total > budget:
        raise BudgetError(f"|X||K||L| = {total} exceeds enumeration budget {budget}")
    if input_marginal is None:
        input_marginal = np.full(size, 1.0 / size)
    input_marginal = np.asarray(input_marginal, dtype=np.float64)
    if input_marginal.shape != (size,):
        raise ValidationError(f"input marginal must have {size} entries, got {input_marginal.shape}")

    kk, ll = np.meshgrid(np.arange(k_size), np.arange(l_size), indexing="ij")
    kk, ll = kk.ravel(), ll.ravel()
    conditional = np.zeros((size, size))
    for x in range(size):
        y = predict(params, np.full(kk.size, x), kk, ll, batch_size=batch_size)
        conditional[x] = np.bincount(y, minlength=size) / kk.size
    return JointPmf(arch.n, input_marginal[:, None] * conditional)


def heatmap_pixels(pmf: JointPmf) -> np.ndarray:
    """8-bit image, row y and column x, scaled so the largest mass is 255."""
    image = pmf.probs.T
    return np.floor(255.0 * image / image.max() + 0.5).astype(np.uint8)


def pgm_bytes(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read back a binary PGM written by emit_heatmap."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5" or parts[3] != b"255":
        raise ValidationError(f"{path}: not an 8-bit binary PGM")
    width, height = int(parts[1]), int(parts[2])
    pixels = np.frombuffer(data[len(data) - width * height:], dtype=np.uint8)
    return pixels.reshape(height, width)


def emit_heatmap(pmf: JointPmf, path: Union[str, Path], png: bool = False) -> List[Path]:
    """
    Write a PMF as CSV and grayscale PGM (and optionally PNG).

    Args:
        pmf: Distribution to draw
        path: Output path; its suffix is replaced per format
        png: Also render a PNG with matplotlib

    Returns:
        Paths written
    """
    path = Path(path)
    pixels = heatmap_pixels(pmf)
    written = [
        save_pmf_csv(pmf, path.with_suffix(".csv")),
        atomic_write_bytes(path.with_suffix(".pgm"), pgm_bytes(pixels)),
    ]
    if png:
        written.append(_render_png(pmf, path.with_suffix(".png")))
    logger.info(f"Wrote heatmap {path.stem} ({pmf.size}x{pmf.size})")
    return written


def _render_png(pmf: JointPmf, path: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(pmf.probs.T, origin="upper", cmap="viridis", interpolation="nearest")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.colorbar(im, ax=ax, label="probability")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
