"""Metric unit values, properties, and the signed-rank test."""

import math

import numpy as np
import pytest

from cdtikit.metrics import (
    MetricError,
    aggregate,
    mae,
    maae,
    psnr,
    signed_rank_null_pmf,
    ssim,
    wilcoxon_signed_rank,
)


class TestMae:
    def test_identical_zero(self):
        x = np.random.default_rng(0).random((8, 8))
        assert mae(x, x) == 0.0

    def test_half(self):
        assert mae(np.array([0.0, 1.0]), np.array([1.0, 1.0])) == 0.5

    def test_complex_magnitude_rule(self):
        assert mae(np.array([3 + 4j]), np.array([0j])) == 5.0

    def test_masked(self):
        x = np.array([[0.0, 10.0]])
        y = np.array([[1.0, 10.0]])
        m = np.array([[True, False]])
        assert mae(x, y, m) == 1.0

    def test_empty_mask_raises(self):
        with pytest.raises(MetricError):
            mae(np.ones(3), np.ones(3), np.zeros(3, bool))


class TestPsnr:
    def test_zero_db_at_unit_ratio(self):
        # MSE == MAX^2  ->  0 dB
        y = np.array([[1.0, 0.0], [0.0, 0.0]])
        x = y + 1.0  # MSE = 1 = max(y)^2
        assert abs(psnr(x, y)) < 1e-12

    def test_twenty_db(self):
        y = np.zeros((10, 10))
        y[0, 0] = 1.0
        x = y + 0.1  # MSE = 0.01 = MAX^2 / 100
        assert abs(psnr(x, y) - 20.0) < 1e-12

    def test_identical_infinite(self):
        x = np.random.default_rng(1).random((4, 4))
        assert psnr(x, x) == math.inf

    def test_monotone_in_noise(self):
        rng = np.random.default_rng(2)
        y = rng.random((32, 32))
        noise = rng.standard_normal(y.shape)
        values = [psnr(y + amp * noise, y) for amp in (0.01, 0.03, 0.09)]
        assert values[0] > values[1] > values[2]


class TestSsim:
    def test_self_similarity_one(self):
        x = np.random.default_rng(3).random((16, 16))
        assert ssim(x, x) == 1.0

    def test_luminance_shift_below_one(self):
        x = np.random.default_rng(4).random((16, 16))
        assert ssim(x + 0.5, x) < 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        x, y = rng.random((12, 12)), rng.random((12, 12))
        assert abs(ssim(x, y) - ssim(y, x)) < 1e-12

    def test_single_window_oracle(self):
        # window >= image shrinks to one window == direct formula evaluation
        rng = np.random.default_rng(6)
        x, y = rng.random((8, 8)), rng.random((8, 8))
        with pytest.warns(UserWarning, match="shrinking"):
            got = ssim(x, y, window=9)
        L = max(x.max(), y.max()) - min(x.min(), y.min())
        c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cov = ((x - mx) * (y - my)).mean()
        want = ((2 * mx * my + c1) * (2 * cov + c2)) / (
            (mx**2 + my**2 + c1) * (vx + vy + c2)
        )
        assert abs(got - want) < 1e-12

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            v = ssim(rng.random((10, 10)), rng.random((10, 10)))
            assert -1.0 <= v <= 1.0


class TestMaae:
    def test_wrap_case(self):
        assert maae(np.array([89.0]), np.array([-89.0])) == 2.0

    def test_direct_case(self):
        assert maae(np.array([10.0]), np.array([30.0])) == 20.0

    def test_boundary_90(self):
        # |45 - (-45)| = 90 triggers the wrap branch: 180 - 90 = 90
        assert maae(np.array([45.0]), np.array([-45.0])) == 90.0

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-90, 90, 100)
        y = rng.uniform(-90, 90, 100)
        assert maae(x, y) == maae(y, x)

    def test_bounded_by_90_and_zero_iff_equal(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(-90, 90, 500)
        y = rng.uniform(-90, 90, 500)
        assert 0 <= maae(x, y) <= 90
        assert maae(x, x) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(MetricError):
            maae(np.array([90.0]), np.array([0.0]))

    def test_empty_mask(self):
        with pytest.raises(MetricError):
            maae(np.zeros(3), np.zeros(3), np.zeros(3, bool))


class TestAggregate:
    def test_1_2_3(self):
        med, iqr = aggregate([1.0, 2.0, 3.0])
        assert med == 2.0 and iqr == 1.0  # Q1 = 1.5, Q3 = 2.5

    def test_constant(self):
        med, iqr = aggregate([4.0] * 10)
        assert med == 4.0 and iqr == 0.0

    def test_single_value(self):
        med, iqr = aggregate([7.5])
        assert med == 7.5 and iqr == 0.0


class TestWilcoxon:
    def test_identical_pairs(self):
        a = np.arange(10.0)
        assert wilcoxon_signed_rank(a, a) == 1.0

    def test_n6_all_positive_exact(self):
        a = np.array([1.0, 2, 3, 4, 5, 6])
        b = a - np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        assert wilcoxon_signed_rank(a, b) == pytest.approx(2 / 64, abs=1e-15)

    def test_large_shift_significant(self):
        rng = np.random.default_rng(10)
        noise = rng.standard_normal(100) * 0.1
        a = rng.random(100)
        b = a + 3.0 + noise
        assert wilcoxon_signed_rank(a, b) < 1e-3

    def test_pmf_sums_to_one(self):
        ranks = np.array([2, 4, 6, 8, 10, 12], dtype=np.int64)  # 2x (1..6)
        pmf = signed_rank_null_pmf(ranks)
        assert abs(pmf.sum() - 1.0) < 1e-12

    def test_exact_matches_scipy_when_available(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(11)
        a = rng.random(12)
        b = a + rng.standard_normal(12) * 0.4
        ours = wilcoxon_signed_rank(a, b)
        ref = scipy_stats.wilcoxon(a, b, mode="exact").pvalue
        assert ours == pytest.approx(ref, rel=1e-9)

    def test_too_few_nonzero(self):
        a = np.array([1.0, 2, 3, 4, 5])
        b = a.copy()
        b[0] += 1
        with pytest.raises(MetricError):
            wilcoxon_signed_rank(a, b)

    def test_symmetric_null_not_significant(self):
        rng = np.random.default_rng(12)
        a = rng.random(50)
        b = a + rng.standard_normal(50) * 0.2  # no systematic shift
        assert wilcoxon_signed_rank(a, b) > 0.01
