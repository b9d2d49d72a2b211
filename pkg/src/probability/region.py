"""
Single-letter rate-region tooling.

A certificate is a joint table p(u, x, y) whose (x, y) marginal is the
per-symbol target and under which X - U - Y is a Markov chain. Each
certificate yields one corner of the achievable region:

    R >= I(X;U),  R0 + R >= I(X,Y;U),  RL >= H(Y|U)

Wyner's common information is the smallest I(X,Y;U) over certificates and
is found here by multi-start constrained minimisation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from src.errors import ConvergenceError, ValidationError
from src.probability.pmf import bsc_joint, entropy

logger = logging.getLogger(__name__)

CERT_TOLERANCE = 1e-9
ACCEPT_SLACK = 1e-12


@dataclass(frozen=True)
class RateTriple:
    """(R, R0, RL) in bits per symbol."""

    r: float
    r0: float
    rl: float

    def __post_init__(self):
        for name in ("r", "r0", "rl"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"rate {name} must be finite and >= 0, got {value}")


@dataclass(frozen=True, eq=False)
class RateRegionCertificate:
    """
    Joint p(u, x, y) witnessing one region corner.

    Attributes:
        p_uxy: Table of shape |U| x |X| x |Y|
        target: Per-symbol target Q_XY of shape |X| x |Y|
        tolerance: Absolute tolerance for the sum, marginal and Markov checks
    """

    p_uxy: np.ndarray
    target: np.ndarray
    tolerance: float = CERT_TOLERANCE

    def __post_init__(self):
        p = np.array(self.p_uxy, dtype=np.float64, copy=True)
        q = np.array(self.target, dtype=np.float64, copy=True)
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p_uxy", p)
        object.__setattr__(self, "target", q)
        self.validate()

    @property
    def u_size(self) -> int:
        return self.p_uxy.shape[0]

    def validate(self) -> None:
        p, q, tol = self.p_uxy, self.target, self.tolerance
        if p.ndim != 3 or q.ndim != 2 or p.shape[1:] != q.shape:
            raise ValidationError(f"certificate shape {p.shape} does not match target shape {q.shape}")
        limit = q.shape[0] * q.shape[1] + 2
        if p.shape[0] > limit:
            raise ValidationError(f"|U| = {p.shape[0]} exceeds |X||Y| + 2 = {limit}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("certificate has negative or non-finite entries")
        if abs(p.sum() - 1.0) > tol:
            raise ValidationError(f"certificate sums to {p.sum()!r}")
        gap = np.abs(p.sum(axis=0) - q).max()
        if gap > tol:
            raise ValidationError(f"certificate (x, y) marginal differs from target by {gap:.3g}")
        p_u = p.sum(axis=(1, 2))
        p_ux = p.sum(axis=2)
        p_uy = p.sum(axis=1)
        # p(u) p(u,x,y) = p(u,x) p(u,y)  <=>  p(y|u,x) = p(y|u) wherever defined
        markov_gap = np.abs(p_u[:, None, None] * p - p_ux[:, :, None] * p_uy[:, None, :]).max()
        if markov_gap > tol:
            raise ValidationError(f"X - U - Y violated by {markov_gap:.3g}")


@dataclass(frozen=True)
class RegionBounds:
    """The three lower bounds of one certificate, in bits per symbol."""

    i_xu: float
    i_xyu: float
    h_y_given_u: float


@dataclass(frozen=True)
class RegionCheck:
    accepted: bool
    bounds: RegionBounds
    violated: Tuple[str, ...] = ()


def certificate_bounds(cert: RateRegionCertificate) -> RegionBounds:
    """Compute I(X;U), I(X,Y;U) and H(Y|U) of a certificate."""
    p = cert.p_uxy
    h_u = entropy(p.sum(axis=(1, 2)))
    h_x = entropy(p.sum(axis=(0, 2)))
    h_xy = entropy(p.sum(axis=0))
    h_ux = entropy(p.sum(axis=2))
    h_uy = entropy(p.sum(axis=1))
    h_uxy = entropy(p)
    return RegionBounds(
        i_xu=max(0.0, h_x + h_u - h_ux),
        i_xyu=max(0.0, h_xy + h_u - h_uxy),
        h_y_given_u=max(0.0, h_uy - h_u),
    )


def check_rate_triple(cert: RateRegionCertificate, triple: RateTriple) -> RegionCheck:
    """
    Test a rate triple against the corner given by a certificate.

    Returns:
        RegionCheck with the acceptance flag, the three bound values and
        the names of any violated constraints
    """
    cert.validate()
    bounds = certificate_bounds(cert)
    violated = []
    if triple.r < bounds.i_xu - ACCEPT_SLACK:
        violated.append("R >= I(X;U)")
    if triple.r0 + triple.r < bounds.i_xyu - ACCEPT_SLACK:
        violated.append("R0 + R >= I(X,Y;U)")
    if triple.rl < bounds.h_y_given_u - ACCEPT_SLACK:
        violated.append("RL >= H(Y|U)")
    return RegionCheck(accepted=not violated, bounds=bounds, violated=tuple(violated))


def dsbs_target(p: float) -> np.ndarray:
    """Per-symbol joint of a doubly symmetric binary source with crossover p."""
    return np.array(bsc_joint(1, p).probs)


def certificate_u_equals_y(target: np.ndarray) -> RateRegionCertificate:
    """U = Y; always Markov. Corner (I(X;Y), H(Y), 0)."""
    target = np.asarray(target, dtype=np.float64)
    ny = target.shape[1]
    p = np.zeros((ny,) + target.shape)
    for y in range(ny):
        p[y, :, y] = target[:, y]
    return RateRegionCertificate(p, target)


def certificate_u_equals_x(target: np.ndarray) -> RateRegionCertificate:
    """U = X; always Markov. Corner (H(X), H(X), H(Y|X))."""
    target = np.asarray(target, dtype=np.float64)
    nx = target.shape[0]
    p = np.zeros((nx,) + target.shape)
    for x in range(nx):
        p[x, x, :] = target[x, :]
    return RateRegionCertificate(p, target)


def certificate_constant(target: np.ndarray) -> RateRegionCertificate:
    """Constant U; Markov only when X and Y are independent."""
    target = np.asarray(target, dtype=np.float64)
    return RateRegionCertificate(target[None, :, :], target)


def certificate_from_factors(p_u: np.ndarray, p_x_given_u: np.ndarray, p_y_given_u: np.ndarray,
                             tolerance: float = CERT_TOLERANCE) -> RateRegionCertificate:
    """Certificate p(u) p(x|u) p(y|u); its own (x, y) marginal is the target."""
    p = p_u[:, None, None] * p_x_given_u[:, :, None] * p_y_given_u[:, None, :]
    return RateRegionCertificate(p, p.sum(axis=0), tolerance=tolerance)


@dataclass
class WCIResult:
    """Outcome of the common-information search."""

    value: float
    certificate: RateRegionCertificate
    starts: int
    feasible_starts: int
    start_values: List[float] = field(default_factory=list)


def _mutual_information_2d(q: np.ndarray) -> float:
    return max(0.0, entropy(q.sum(axis=1)) + entropy(q.sum(axis=0)) - entropy(q))


def _unpack(theta: np.ndarray, nu: int, nx: int, ny: int) -> np.ndarray:
    a = theta[:nu]
    bx = theta[nu:nu + nu * nx].reshape(nu, nx)
    by = theta[nu + nu * nx:].reshape(nu, ny)
    return softmax(a)[:, None, None] * softmax(bx, axis=1)[:, :, None] * softmax(by, axis=1)[:, None, :]


def wyner_common_information(target: np.ndarray, u_size: Optional[int] = None, starts: int = 12,
                             seed: int = 0, feasibility_tol: float = 1e-8) -> WCIResult:
    """
    Minimise I(X,Y;U) over p(u) p(x|u) p(y|u) with (x, y) marginal = target.

    The Markov chain holds by construction of the factorisation; each
    factor is mapped onto its simplex with a softmax, and the marginal is
    an equality constraint for SLSQP.

    Args:
        target: Per-symbol joint Q_XY
        u_size: |U|, at most |X||Y| + 2 (the default)
        starts: Number of random initialisations
        seed: Seed for the initialisations
        feasibility_tol: Max marginal deviation accepted from the optimiser

    Returns:
        WCIResult, value clamped to [I(X;Y), min(H(X), H(Y))]

    Raises:
        ConvergenceError: no start reached a feasible point
    """
    q = np.asarray(target, dtype=np.float64)
    nx, ny = q.shape
    limit = nx * ny + 2
    nu = limit if u_size is None else u_size
    if not 1 <= nu <= limit:
        raise ValidationError(f"|U| must lie in [1, {limit}], got {nu}")

    px, py = q.sum(axis=1), q.sum(axis=0)
    lower = _mutual_information_2d(q)
    upper_x, upper_y = entropy(px), entropy(py)

    # Closed endpoints: independence needs no common part; a deterministic
    # relation makes the common part the whole of the determined variable.
    if np.allclose(q, np.outer(px, py), rtol=0.0, atol=1e-15):
        cert = certificate_constant(q)
        return WCIResult(0.0, cert, 0, 0)
    if entropy(q) - upper_x <= 1e-12:
        return WCIResult(float(np.round(upper_y, 12)), certificate_u_equals_y(q), 0, 0)
    if entropy(q) - upper_y <= 1e-12:
        return WCIResult(float(np.round(upper_x, 12)), certificate_u_equals_x(q), 0, 0)

    h_q = entropy(q)
    free_cells = nx * ny - 1

    def objective(theta: np.ndarray) -> float:
        p = _unpack(theta, nu, nx, ny)
        return entropy(p.sum(axis=(1, 2))) + h_q - entropy(p)

    def marginal_gap(theta: np.ndarray) -> np.ndarray:
        return (_unpack(theta, nu, nx, ny).sum(axis=0) - q).ravel()[:free_cells]

    rng = np.random.default_rng(seed)
    dim = nu + nu * nx + nu * ny
    best_value, best_theta, best_any = math.inf, None, math.inf
    values = []
    feasible = 0
    for start in range(starts):
        theta0 = rng.normal(0.0, 2.0, size=dim)
        result = minimize(
            objective,
            theta0,
            method="SLSQP",
            constraints=[{"type": "eq", "fun": marginal_gap}],
            options={"ftol": 1e-13, "maxiter": 1000},
        )
        value = float(objective(result.x))
        gap = float(np.abs(_unpack(result.x, nu, nx, ny).sum(axis=0) - q).max())
        best_any = min(best_any, value)
        logger.debug(f"WCI start {start}: value={value:.6f} gap={gap:.2e} success={result.success}")
        if gap <= feasibility_tol:
            feasible += 1
            values.append(value)
            if value < best_value:
                best_value, best_theta = value, result.x

    if best_theta is None:
        raise ConvergenceError("common-information search found no feasible point", best_any)

    p = _unpack(best_theta, nu, nx, ny)
    cert = RateRegionCertificate(p, q, tolerance=feasibility_tol)
    value = min(max(best_value, lower), min(upper_x, upper_y))
    logger.info(f"WCI = {value:.6f} bits ({feasible}/{starts} feasible starts, |U| = {nu})")
    return WCIResult(value, cert, starts, feasible, values)


def wci_dsbs(p: float, **kwargs) -> float:
    """Wyner's common information (bits/symbol) of a DSBS with crossover p."""
    if not 0.0 <= p <= 0.5:
        raise ValidationError(f"crossover must lie in [0, 0.5], got {p}")
    return wyner_common_information(dsbs_target(p), **kwargs).value


@dataclass(frozen=True)
class CornerPoint:
    label: str
    triple: RateTriple
    certificate: RateRegionCertificate


def corner_points(target: np.ndarray, wci: Optional[WCIResult] = None) -> List[CornerPoint]:
    """
    Characteristic corners of the region for one per-symbol target.

    - local randomness only (U = X): no common randomness needed;
    - common information (U from the WCI search): smallest R with R0 = 0;
    - plenty of common randomness (U = Y): R down to I(X;Y).
    """
    corners = []
    labelled = [("local-only", certificate_u_equals_x(target)), ("unlimited-cr", certificate_u_equals_y(target))]
    if wci is not None:
        labelled.insert(1, ("wyner", wci.certificate))
    for label, cert in labelled:
        bounds = certificate_bounds(cert)
        r = bounds.i_xyu if label == "wyner" else bounds.i_xu
        triple = RateTriple(r=r, r0=max(0.0, bounds.i_xyu - r), rl=bounds.h_y_given_u)
        corners.append(CornerPoint(label, triple, cert))
    return corners


@dataclass(frozen=True)
class CoverageRatio:
    """N_s relative to T = |X||Y||K||L|, kept in the log2 domain."""

    log2_total: float
    log2_ratio: float

    @property
    def ratio(self) -> float:
        return 2.0 ** self.log2_ratio

    @property
    def percent(self) -> float:
        return 100.0 * self.ratio


def coverage_ratio(n: int, nr0: int, nrl: int, ns: int) -> CoverageRatio:
    """
    Ratio of the sample count to the number of (x, y, k, l) combinations.

    Args:
        n: Blocklength
        nr0: Common-randomness bits
        nrl: Local-randomness bits
        ns: Sample count
    """
    if n < 0 or nr0 < 0 or nrl < 0:
        raise ValidationError("blocklength and randomness bits must be >= 0")
    if ns < 1:
        raise ValidationError(f"sample count must be >= 1, got {ns}")
    log2_total = float(2 * n + nr0 + nrl)
    return CoverageRatio(log2_total=log2_total, log2_ratio=math.log2(ns) - log2_total)


def format_percent(percent: float) -> str:
    """Render a coverage percentage the way the sample-size table prints it."""
    if percent >= 1.0:
        return f"{percent:.3f}%"
    if percent >= 1e-4:
        return f"{percent:.4f}%"
    mantissa, exponent = f"{percent:.3e}".split("e")
    return f"{mantissa}·10^{int(exponent)}%"


# (n, nR0, nRL) of the full-size experiments, all trained on 2^26 samples
EXPERIMENT_GRID = (
    (8, 0, 12),
    (10, 0, 15),
    (8, 0, 16),
    (10, 0, 20),
    (8, 16, 12),
    (10, 20, 15),
    (8, 16, 16),
    (10, 20, 20),
)
EXPERIMENT_SAMPLES = 1 << 26


def coverage_table(rows: Sequence[Tuple[int, int, int]] = EXPERIMENT_GRID,
                   ns: int = EXPERIMENT_SAMPLES) -> List[Tuple[int, int, int, CoverageRatio]]:
    """Coverage ratio for every (n, nR0, nRL) row."""
    return [(n, nr0, nrl, coverage_ratio(n, nr0, nrl, ns)) for n, nr0, nrl in rows]
