import numpy as np
import pytest
from scipy.stats import norm

from gklsbi.metrics import C2stConfig, c2st

FAST = C2stConfig(max_epochs=60, patience=8)


def gaussian_sets(gap, n, dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, dim))
    b = rng.standard_normal((n, dim))
    b[:, 0] += gap
    return a, b


class TestCalibration:
    def test_identical_distributions_score_one_half(self):
        a, b = gaussian_sets(0.0, 4000, 5, seed=0)
        acc, folds = c2st(a, b, FAST, np.random.default_rng(1))
        assert acc == pytest.approx(0.5, abs=0.03)
        assert len(folds) == FAST.folds

    def test_unit_gap_gaussians_score_bayes_accuracy(self):
        # optimal classifier thresholds the first coordinate at the midpoint
        a, b = gaussian_sets(1.0, 5000, 1, seed=2)
        acc, _ = c2st(a, b, FAST, np.random.default_rng(3))
        assert acc == pytest.approx(norm.cdf(0.5), abs=0.02)

    def test_symmetry_in_argument_order(self):
        a, b = gaussian_sets(0.8, 3000, 2, seed=4)
        acc_ab, _ = c2st(a, b, FAST, np.random.default_rng(5))
        acc_ba, _ = c2st(b, a, FAST, np.random.default_rng(6))
        assert abs(acc_ab - acc_ba) < 0.02

    def test_monotone_in_separation(self):
        accs = []
        for gap in (0.0, 0.7, 2.0):
            a, b = gaussian_sets(gap, 3000, 2, seed=7)
            acc, _ = c2st(a, b, FAST, np.random.default_rng(8))
            accs.append(acc)
        assert accs[0] < accs[1] - 0.05 < accs[2] - 0.1

    def test_disjoint_supports_score_near_one(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(0, 1, (2500, 2))
        b = rng.uniform(2, 3, (2500, 2))
        acc, _ = c2st(a, b, FAST, np.random.default_rng(10))
        assert acc > 0.99


class TestValidation:
    def test_scale_invariance_through_standardization(self):
        a, b = gaussian_sets(1.0, 3000, 1, seed=11)
        acc_raw, _ = c2st(a, b, FAST, np.random.default_rng(12))
        acc_scaled, _ = c2st(a * 1e6, b * 1e6, FAST, np.random.default_rng(12))
        assert abs(acc_raw - acc_scaled) < 0.02

    def test_zero_variance_feature_is_dropped(self):
        a, b = gaussian_sets(1.0, 1500, 1, seed=13)
        a = np.concatenate([a, np.full((len(a), 1), 3.0)], axis=1)
        b = np.concatenate([b, np.full((len(b), 1), 3.0)], axis=1)
        acc, _ = c2st(a, b, FAST, np.random.default_rng(14))
        assert acc == pytest.approx(norm.cdf(0.5), abs=0.03)

    def test_rejects_tiny_sample_sets(self):
        a, b = gaussian_sets(0.0, 400, 2, seed=15)
        with pytest.raises(ValueError):
            c2st(a, b, FAST)

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            c2st(np.zeros((600, 2)), np.zeros((600, 3)), FAST)

    def test_rejects_single_fold(self):
        with pytest.raises(ValueError):
            C2stConfig(folds=1)
