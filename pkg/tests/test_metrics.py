import numpy as np
import pytest

from gloss.exceptions import ValidationError
from gloss.validators.metrics import (accuracy, evaluate, macro_f1, macro_silhouette, paired_t_test,
                                      significance_stars)


def _silhouette_reference(z, y):
    n = len(y)
    dist = np.sqrt(((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2))
    s = np.zeros(n)
    for i in range(n):
        same = (y == y[i]) & (np.arange(n) != i)
        if not same.any():
            continue
        a = dist[i, same].mean()
        b = min(dist[i, y == c].mean() for c in np.unique(y) if c != y[i])
        s[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    classes = np.unique(y)
    return np.mean([s[y == c].mean() for c in classes])


class TestClassification:
    def test_accuracy(self):
        assert accuracy([0, 1, 1, 2], [0, 1, 2, 2]) == 0.75

    def test_macro_f1_by_hand(self):
        pred = [0, 0, 1, 1, 2]
        truth = [0, 1, 1, 1, 2]
        # classe 0: p=1/2 r=1 f=2/3; classe 1: p=1 r=2/3 f=0.8; classe 2: f=1
        assert macro_f1(pred, truth, 3) == pytest.approx((2 / 3 + 0.8 + 1.0) / 3)

    def test_absent_class_counts_as_zero(self):
        assert macro_f1([0, 1], [0, 1], 3) == pytest.approx(2 / 3)

    def test_label_range(self):
        with pytest.raises(ValidationError):
            macro_f1([0, 3], [0, 1], 3)
        with pytest.raises(ValidationError):
            accuracy([0, 1], [0])


class TestSilhouette:
    def test_matches_brute_force(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 51))
            k = int(rng.integers(2, min(5, n - 1) + 1))
            y = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
            z = rng.standard_normal((n, int(rng.integers(1, 5))))
            np.testing.assert_allclose(macro_silhouette(z, y), _silhouette_reference(z, y), rtol=1e-10, atol=1e-12)

    def test_well_separated(self, rng):
        z = np.vstack([rng.standard_normal((20, 2)) * 0.1, rng.standard_normal((20, 2)) * 0.1 + 50.0])
        y = np.repeat([0, 1], 20)
        assert macro_silhouette(z, y) > 0.9

    def test_class_balanced(self, rng):
        # a classe pequena pesa o mesmo que a grande
        z = np.vstack([rng.standard_normal((30, 2)) * 0.1, np.array([[10.0, 0.0], [0.0, 10.0]])])
        y = np.array([0] * 30 + [1, 1])
        per_point = _silhouette_reference(z, y)
        assert macro_silhouette(z, y) == pytest.approx(per_point)

    def test_invariant_to_rigid_motion_and_scale(self, rng):
        z = rng.standard_normal((24, 3))
        y = np.arange(24) % 3
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        base = macro_silhouette(z, y)
        assert macro_silhouette(z + np.array([5.0, -2.0, 0.5]), y) == pytest.approx(base, abs=1e-12)
        assert macro_silhouette(z @ Q, y) == pytest.approx(base, abs=1e-12)
        assert macro_silhouette(3.7 * z, y) == pytest.approx(base, abs=1e-12)

    def test_singletons_and_single_class(self, rng):
        assert macro_silhouette(rng.standard_normal((3, 2)), [0, 1, 2]) == 0.0
        with pytest.raises(ValidationError):
            macro_silhouette(rng.standard_normal((3, 2)), [1, 1, 1])

    def test_evaluate(self, rng):
        z = rng.standard_normal((6, 2))
        metrics = evaluate(z, [0, 1, 0, 1, 0, 1], [0, 1, 0, 1, 1, 1], 2)
        assert metrics.accuracy == pytest.approx(5 / 6)
        assert set(metrics.to_dict()) == {'accuracy', 'macro_f1', 'macro_silhouette'}


class TestPairedTTest:
    def test_identical_vectors(self):
        result = paired_t_test([0.8, 0.9, 0.7], [0.8, 0.9, 0.7])
        assert (result.t_stat, result.p_value) == (0.0, 1.0)
        assert result.stars == ''

    def test_shift_with_low_variance(self):
        diffs = np.array([0.2935, 0.4618, 0.63, 0.7982, 0.9665])
        b = np.array([80.0, 81.0, 82.0, 83.0, 84.0])
        result = paired_t_test(b + diffs, b)
        assert result.mean_diff == pytest.approx(0.63)
        assert 0.001 < result.p_value < 0.01
        assert result.stars == '***'

    def test_two_sided_symmetry(self, rng):
        a = rng.random(6)
        b = rng.random(6)
        assert paired_t_test(a, b).p_value == pytest.approx(paired_t_test(b, a).p_value)
        assert paired_t_test(a, b).t_stat == pytest.approx(-paired_t_test(b, a).t_stat)

    def test_constant_nonzero_difference(self):
        result = paired_t_test([1.0, 2.0, 3.0], [0.5, 1.5, 2.5])
        assert result.p_value == 0.0
        assert result.t_stat == np.inf

    def test_needs_two_pairs(self):
        with pytest.raises(ValidationError):
            paired_t_test([1.0], [0.0])
        with pytest.raises(ValidationError):
            paired_t_test([1.0, 2.0], [0.0])

    @pytest.mark.parametrize('p, mark', [(0.2, ''), (0.04, '**'), (0.005, '***'), (0.0005, '****')])
    def test_stars(self, p, mark):
        assert significance_stars(p) == mark
