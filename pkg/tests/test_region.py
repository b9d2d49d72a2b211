"""
Tests for the rate-region tooling
"""

import math

import numpy as np
import pytest

from src.errors import ValidationError
from src.probability import (
    EXPERIMENT_GRID,
    RateRegionCertificate,
    RateTriple,
    binary_entropy,
    bsc_joint,
    certificate_bounds,
    certificate_constant,
    certificate_from_factors,
    certificate_u_equals_x,
    certificate_u_equals_y,
    check_rate_triple,
    corner_points,
    coverage_ratio,
    coverage_table,
    dsbs_target,
    format_percent,
    mutual_information,
    wci_dsbs,
    wyner_common_information,
)


def dsbs_wci_closed_form(p: float) -> float:
    """Known closed form for the doubly symmetric binary source."""
    a0 = (1.0 - math.sqrt(1.0 - 2.0 * p)) / 2.0
    return 1.0 + binary_entropy(p) - 2.0 * binary_entropy(a0)


def random_certificate(rng: np.random.Generator) -> RateRegionCertificate:
    nu = int(rng.integers(1, 5))
    p_u = rng.dirichlet(np.ones(nu))
    p_x = rng.dirichlet(np.ones(2), size=nu)
    p_y = rng.dirichlet(np.ones(2), size=nu)
    return certificate_from_factors(p_u, p_x, p_y)


class TestCertificates:
    """Test cases for RateRegionCertificate validation and bounds."""

    def test_u_equals_y_bounds(self):
        """Test the U = Y corner of BSC(0.25)."""
        bounds = certificate_bounds(certificate_u_equals_y(dsbs_target(0.25)))

        assert bounds.i_xu == pytest.approx(0.1887, abs=1e-4)
        assert bounds.i_xyu == pytest.approx(1.0)
        assert bounds.h_y_given_u == pytest.approx(0.0, abs=1e-12)

    def test_u_equals_x_bounds(self):
        """Test the U = X corner: R >= H(X), RL >= H(Y|X)."""
        bounds = certificate_bounds(certificate_u_equals_x(dsbs_target(0.25)))

        assert bounds.i_xu == pytest.approx(1.0)
        assert bounds.h_y_given_u == pytest.approx(binary_entropy(0.25))

    def test_marginal_mismatch(self):
        """Test that a certificate must reproduce the target."""
        cert = certificate_u_equals_y(dsbs_target(0.25))
        with pytest.raises(ValidationError):
            RateRegionCertificate(cert.p_uxy, dsbs_target(0.11))

    def test_markov_violation(self):
        """Test that a constant U on a dependent target is not Markov."""
        with pytest.raises(ValidationError):
            certificate_constant(dsbs_target(0.25))

    def test_alphabet_limit(self):
        """Test that |U| may not exceed |X||Y| + 2."""
        target = dsbs_target(0.5)
        p = np.zeros((7, 2, 2))
        p[:4] = target / 4
        with pytest.raises(ValidationError):
            RateRegionCertificate(p, target)


class TestCheckRateTriple:
    """Test cases for check_rate_triple."""

    def test_accepts_inside(self):
        """Test (0.2, 0.9, 0.1) against the U = Y corner."""
        check = check_rate_triple(certificate_u_equals_y(dsbs_target(0.25)), RateTriple(0.2, 0.9, 0.1))
        assert check.accepted
        assert check.violated == ()

    def test_independent_target(self):
        """Test (0, 0, 1) against a constant U for BSC(0.5)."""
        check = check_rate_triple(certificate_constant(dsbs_target(0.5)), RateTriple(0.0, 0.0, 1.0))

        assert check.accepted
        assert check.bounds.h_y_given_u == pytest.approx(1.0)

    def test_rejects_zero_triple(self):
        """Test that (0, 0, 0) violates R >= I(X;U) first."""
        check = check_rate_triple(certificate_u_equals_y(dsbs_target(0.25)), RateTriple(0.0, 0.0, 0.0))

        assert not check.accepted
        assert check.violated[0] == "R >= I(X;U)"

    def test_negative_rate(self):
        """Test that rates must be non-negative."""
        with pytest.raises(ValidationError):
            RateTriple(-0.1, 0.0, 0.0)

    def test_monotone(self):
        """Test that enlarging an accepted triple keeps it accepted."""
        rng = np.random.default_rng(11)
        for _ in range(100):
            cert = random_certificate(rng)
            b = certificate_bounds(cert)
            triple = RateTriple(b.i_xu, max(0.0, b.i_xyu - b.i_xu), b.h_y_given_u)
            assert check_rate_triple(cert, triple).accepted
            for bump in np.eye(3) * rng.random(3):
                bigger = RateTriple(triple.r + bump[0], triple.r0 + bump[1], triple.rl + bump[2])
                assert check_rate_triple(cert, bigger).accepted


class TestWynerCommonInformation:
    """Test cases for the common-information search."""

    def test_independent(self):
        """Test wci(0.5) = 0 exactly."""
        assert wci_dsbs(0.5) == 0.0

    def test_identical(self):
        """Test wci(0) = 1 exactly."""
        assert wci_dsbs(0.0) == 1.0

    def test_quarter_crossover(self):
        """Test p=0.25 against the known closed form."""
        value = wci_dsbs(0.25)

        assert dsbs_wci_closed_form(0.25) == pytest.approx(0.6095, abs=1e-4)
        assert value == pytest.approx(dsbs_wci_closed_form(0.25), abs=2e-3)
        assert 0.1887 <= value <= 1.0

    def test_stable_across_seeds(self):
        """Test that different start seeds agree."""
        values = [wci_dsbs(0.25, seed=s) for s in (1, 2)]
        assert abs(values[0] - values[1]) <= 1e-3

    def test_above_mutual_information(self):
        """Test wci(p) >= I(X;Y) on a grid of crossovers."""
        for p in np.arange(0.05, 0.5, 0.05):
            mi = mutual_information(bsc_joint(1, float(p)))
            assert wci_dsbs(float(p), starts=4) >= mi - 1e-9

    def test_certificate_is_valid(self):
        """Test that the returned certificate reproduces the target and the value."""
        result = wyner_common_information(dsbs_target(0.2), starts=6)
        bounds = certificate_bounds(result.certificate)

        assert result.feasible_starts >= 1
        assert bounds.i_xyu == pytest.approx(result.value, abs=1e-6)
        assert check_rate_triple(result.certificate, RateTriple(result.value + 1e-6, 0.0, 1.0)).accepted

    def test_invalid_crossover(self):
        """Test that p above 0.5 is rejected."""
        with pytest.raises(ValidationError):
            wci_dsbs(0.6)


class TestCornerPoints:
    """Test cases for corner_points."""

    def test_labels_and_order(self):
        """Test the three corners with a WCI result."""
        target = dsbs_target(0.25)
        corners = corner_points(target, wyner_common_information(target, starts=4))

        assert [c.label for c in corners] == ["local-only", "wyner", "unlimited-cr"]

    def test_unlimited_cr_rate(self):
        """Test that plenty of common randomness brings R down to I(X;Y)."""
        corners = corner_points(dsbs_target(0.25))
        unlimited = [c for c in corners if c.label == "unlimited-cr"][0]

        assert unlimited.triple.r == pytest.approx(0.1887, abs=1e-4)
        assert unlimited.triple.r0 == pytest.approx(1.0 - 0.1887, abs=1e-4)


class TestCoverageRatio:
    """Test cases for the sample coverage ratio."""

    @pytest.mark.parametrize("row,printed", [
        ((8, 0, 12), "25.000%"),
        ((10, 0, 15), "0.1953%"),
        ((10, 0, 20), "0.0061%"),
        ((8, 16, 12), "0.0004%"),
        ((10, 20, 15), "1.863·10^-7%"),
        ((8, 16, 16), "2.384·10^-5%"),
        ((10, 20, 20), "5.821·10^-9%"),
    ])
    def test_experiment_rows(self, row, printed):
        """Test coverage of the full-size experiments at 2^26 samples."""
        n, nr0, nrl = row
        assert format_percent(coverage_ratio(n, nr0, nrl, 1 << 26).percent) == printed

    def test_printed_rounding_row(self):
        """Test the n=8, nRL=16 row, printed as 1.5620% for the exact 1.5625%."""
        cov = coverage_ratio(8, 0, 16, 1 << 26)

        assert cov.log2_total == 32
        assert cov.percent == 1.5625
        assert cov.percent == pytest.approx(1.5620, abs=1e-3)

    def test_total_in_log_domain(self):
        """Test T = 2^(2n + nR0 + nRL) without overflow."""
        cov = coverage_ratio(16, 63, 63, 1)
        assert cov.log2_total == 158
        assert cov.ratio == 2.0 ** -158

    def test_table_rows(self):
        """Test the full grid listing."""
        rows = coverage_table()
        assert [r[:3] for r in rows] == list(EXPERIMENT_GRID)
        assert rows[0][3].percent == 25.0

    def test_rejects_zero_samples(self):
        """Test that Ns must be at least one."""
        with pytest.raises(ValidationError):
            coverage_ratio(4, 0, 0, 0)


if __name__ == "__main__":
    pytest.main([__file__])
