"""
Tests for the probability module
"""

import math

import numpy as np
import pytest

from src.errors import FormatError, SupportError, ValidationError
from src.probability import (
    ConditionalPmf,
    JointPmf,
    binary_entropy,
    bsc_conditional,
    bsc_joint,
    conditional_entropy_y_given_x,
    empirical_joint,
    empirical_joint_from_arrays,
    kl_divergence,
    load_pmf_csv,
    mutual_information,
    pinsker_bound,
    save_pmf_csv,
    tvd,
)


def two_point(a: float, b: float) -> JointPmf:
    """A distribution on two cells embedded in an n=1 table."""
    return JointPmf(1, np.array([[a, 0.0], [b, 0.0]]))


def random_joint(rng: np.random.Generator, n: int = 1) -> JointPmf:
    size = 1 << n
    probs = rng.random((size, size)) + 1e-3
    return JointPmf(n, probs / probs.sum())


class TestJointPmf:
    """Test cases for JointPmf and ConditionalPmf."""

    def test_rejects_bad_sum(self):
        """Test that a table not summing to one is rejected."""
        with pytest.raises(ValidationError):
            JointPmf(1, np.array([[0.5, 0.5], [0.5, 0.5]]))

    def test_rejects_negative_entry(self):
        """Test that negative entries are rejected."""
        with pytest.raises(ValidationError):
            JointPmf(1, np.array([[1.2, -0.2], [0.0, 0.0]]))

    def test_rejects_wrong_shape(self):
        """Test that the table must be 2^n x 2^n."""
        with pytest.raises(ValidationError):
            JointPmf(2, np.full((2, 2), 0.25))

    def test_table_is_read_only(self):
        """Test that stored probabilities cannot be mutated."""
        pmf = bsc_joint(1, 0.25)
        with pytest.raises(ValueError):
            pmf.probs[0, 0] = 1.0

    def test_conditional_rows_sum_to_one(self):
        """Test conditional of a joint, including an unobserved input row."""
        joint = JointPmf(1, np.array([[0.25, 0.75], [0.0, 0.0]]))
        cond = joint.conditional()

        np.testing.assert_allclose(cond.probs[0], [0.25, 0.75])
        np.testing.assert_allclose(cond.probs[1], [0.5, 0.5])

    def test_conditional_rejects_bad_row(self):
        """Test that conditional rows must each sum to one."""
        with pytest.raises(ValidationError):
            ConditionalPmf(1, np.array([[0.5, 0.4], [0.5, 0.5]]))


class TestDivergences:
    """Test cases for tvd, kl_divergence and the Pinsker bound."""

    def test_tvd_identity(self):
        """Test TVD of a distribution with itself."""
        p = bsc_joint(2, 0.11)
        assert tvd(p, p) == 0.0

    def test_tvd_disjoint_supports(self):
        """Test point masses on different cells."""
        p = JointPmf(1, np.array([[1.0, 0.0], [0.0, 0.0]]))
        q = JointPmf(1, np.array([[0.0, 0.0], [0.0, 1.0]]))
        assert tvd(p, q) == 1.0

    def test_tvd_two_point(self):
        """Test (0.5, 0.5) against (0.25, 0.75)."""
        assert tvd(two_point(0.5, 0.5), two_point(0.25, 0.75)) == pytest.approx(0.25)

    def test_tvd_shape_mismatch(self):
        """Test that different blocklengths are rejected."""
        with pytest.raises(ValidationError):
            tvd(bsc_joint(1, 0.1), bsc_joint(2, 0.1))

    def test_tvd_metric_properties(self):
        """Test symmetry and the triangle inequality on random triples."""
        rng = np.random.default_rng(3)
        for _ in range(200):
            p, q, r = (random_joint(rng, 2) for _ in range(3))
            assert tvd(p, q) == pytest.approx(tvd(q, p))
            assert tvd(p, r) <= tvd(p, q) + tvd(q, r) + 1e-12
            assert 0.0 <= tvd(p, q) <= 1.0

    def test_kl_identity(self):
        """Test KL of a distribution with itself."""
        p = bsc_joint(2, 0.25)
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_kl_one_bit(self):
        """Test KL((1, 0) || (0.5, 0.5)) = 1 bit."""
        assert kl_divergence(two_point(1.0, 0.0), two_point(0.5, 0.5)) == pytest.approx(1.0)

    def test_kl_support_violation(self):
        """Test that mass outside the support of q names the cell."""
        with pytest.raises(SupportError) as exc:
            kl_divergence(two_point(0.5, 0.5), two_point(1.0, 0.0))
        assert exc.value.cell == (1, 0)
        assert exc.value.p_value == 0.5

    def test_pinsker_two_point(self):
        """Test the Pinsker bound on the two-point example."""
        p, q = two_point(0.5, 0.5), two_point(0.25, 0.75)
        assert 0.25 <= pinsker_bound(kl_divergence(p, q))

    def test_pinsker_random_pairs(self):
        """Test TVD <= sqrt(ln2 KL / 2) on 1,000 random full-support pairs."""
        rng = np.random.default_rng(7)
        for _ in range(1000):
            p, q = random_joint(rng, 1), random_joint(rng, 1)
            assert tvd(p, q) <= pinsker_bound(kl_divergence(p, q)) + 1e-12


class TestInformation:
    """Test cases for entropies and mutual information."""

    def test_binary_entropy(self):
        """Test h(0.5) = 1 and h(0) = 0."""
        assert binary_entropy(0.5) == pytest.approx(1.0)
        assert binary_entropy(0.0) == 0.0

    @pytest.mark.parametrize("p,expected", [(0.11, 0.5004), (0.25, 0.1887)])
    def test_bsc_mutual_information_per_symbol(self, p, expected):
        """Test per-symbol I(X;Y) of a BSC with uniform input."""
        assert mutual_information(bsc_joint(1, p), per_symbol=True) == pytest.approx(expected, abs=1e-3)

    def test_independent_channel(self):
        """Test that BSC(0.5) carries no information."""
        assert mutual_information(bsc_joint(3, 0.5)) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_block_mutual_information_is_additive(self, n):
        """Test I(X;Y) = n (1 - h(p)) for n uses of a BSC."""
        p = 0.17
        expected = n * (1.0 - binary_entropy(p))
        assert mutual_information(bsc_joint(n, p)) == pytest.approx(expected, abs=1e-9)
        assert mutual_information(bsc_joint(n, p), per_symbol=True) == pytest.approx(expected / n, abs=1e-9)

    def test_conditional_entropy(self):
        """Test H(Y|X) = n h(p) for a BSC."""
        assert conditional_entropy_y_given_x(bsc_joint(2, 0.25)) == pytest.approx(2 * binary_entropy(0.25))


class TestBsc:
    """Test cases for the BSC target."""

    def test_single_use_table(self):
        """Test n=1, p=0.25."""
        np.testing.assert_allclose(bsc_joint(1, 0.25).probs, [[0.375, 0.125], [0.125, 0.375]])

    def test_noiseless(self):
        """Test p=0 gives a uniform diagonal."""
        probs = bsc_joint(2, 0.0).probs
        np.testing.assert_allclose(probs, np.eye(4) / 4)

    def test_rows_sum_to_one(self):
        """Test conditional rows for several (n, p)."""
        for n in (1, 3, 5):
            for p in (0.0, 0.11, 0.25, 1.0):
                np.testing.assert_allclose(bsc_conditional(n, p).probs.sum(axis=1), 1.0, atol=1e-12)

    def test_hamming_weight_rule(self):
        """Test Pr[y | x] = p^d (1-p)^(n-d)."""
        cond = bsc_conditional(3, 0.1)
        assert cond.probs[0b000, 0b101] == pytest.approx(0.1 ** 2 * 0.9)
        assert cond.probs[0b110, 0b110] == pytest.approx(0.9 ** 3)

    def test_invalid_crossover(self):
        """Test that p outside [0, 1] is rejected."""
        with pytest.raises(ValidationError):
            bsc_joint(1, 1.5)


class TestEmpiricalJoint:
    """Test cases for relative frequency estimates."""

    def test_point_mass(self):
        """Test all-equal samples."""
        pmf = empirical_joint([(0, 0)] * 5, 1)
        np.testing.assert_array_equal(pmf.probs, [[1.0, 0.0], [0.0, 0.0]])

    def test_counting(self):
        """Test four samples on a 2x2 table."""
        pmf = empirical_joint([(0, 0), (0, 0), (0, 1), (1, 1)], 1)
        np.testing.assert_array_equal(pmf.probs, [[0.5, 0.25], [0.0, 0.25]])

    def test_empty_input(self):
        """Test that zero samples are rejected."""
        with pytest.raises(ValidationError):
            empirical_joint([], 1)

    def test_out_of_range(self):
        """Test that indices beyond 2^n are rejected."""
        with pytest.raises(ValidationError):
            empirical_joint([(0, 2)], 1)

    def test_converges(self):
        """Test that 100x more samples moves the estimate closer to the target."""
        target = bsc_joint(2, 0.25)
        xs, ys = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
        cells = np.stack([xs.ravel(), ys.ravel()], axis=1)
        for seed in range(3):
            rng = np.random.default_rng(seed)
            small = cells[rng.choice(16, size=200, p=target.probs.ravel())]
            large = cells[rng.choice(16, size=20000, p=target.probs.ravel())]
            assert tvd(empirical_joint(large, 2), target) < tvd(empirical_joint(small, 2), target)

    def test_arrays_match_pairs(self):
        """Test the array and pair entry points agree."""
        x = np.array([0, 1, 1, 3])
        y = np.array([2, 1, 1, 0])
        assert empirical_joint_from_arrays(x, y, 2) == empirical_joint(list(zip(x, y)), 2)


class TestPmfCsv:
    """Test cases for the PMF CSV format."""

    def test_save_and_load(self, tmp_path):
        """Test that a saved PMF loads back bit-identically."""
        pmf = bsc_joint(2, 0.11)
        path = save_pmf_csv(pmf, tmp_path / "q.csv")

        assert path.read_text().splitlines()[0] == "x,y,prob"
        assert len(path.read_text().splitlines()) == 1 + 16
        assert load_pmf_csv(path) == pmf

    def test_bad_header(self, tmp_path):
        """Test that a wrong header is rejected."""
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n0,0,0.5\n0,1,0.5\n1,0,0\n1,1,0\n")
        with pytest.raises(FormatError):
            load_pmf_csv(path)

    def test_bad_row_order(self, tmp_path):
        """Test that rows must be ordered over x then y."""
        path = tmp_path / "order.csv"
        path.write_text("x,y,prob\n0,0,0.5\n1,0,0\n0,1,0.5\n1,1,0\n")
        with pytest.raises(FormatError):
            load_pmf_csv(path)

    def test_bad_row_count(self, tmp_path):
        """Test that the row count must be 4^n."""
        path = tmp_path / "rows.csv"
        path.write_text("x,y,prob\n0,0,0.5\n0,1,0.5\n1,0,0\n")
        with pytest.raises(FormatError):
            load_pmf_csv(path)

    def test_invalid_distribution(self, tmp_path):
        """Test that the loaded table is validated as a PMF."""
        path = tmp_path / "sum.csv"
        path.write_text("x,y,prob\n0,0,0.5\n0,1,0.6\n1,0,0\n1,1,0\n")
        with pytest.raises(ValidationError):
            load_pmf_csv(path)


if __name__ == "__main__":
    pytest.main([__file__])
