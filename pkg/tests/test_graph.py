import numpy as np
import pytest

from gloss.exceptions import GraphError, ValidationError
from gloss.processors.graph import (GraphBuilder, column_stochastic, gaussian_kernel, median_sq_distance,
                                    pairwise_sq_distances, sigma_sqrt, symmetric_normalize)
from gloss.processors.lpa import LabelSplit, gamma_split
from gloss.processors.tape import Tape


def _brute_median(X):
    values = []
    for i in range(X.shape[0]):
        for j in range(i + 1, X.shape[0]):
            d = X[i] - X[j]
            values.append(np.sum(d * d))
    values.sort()
    return values[(len(values) - 1) // 2]


class TestPipeline:
    def test_kernel_properties(self, rng):
        X = rng.standard_normal((6, 3))
        W = gaussian_kernel(pairwise_sq_distances(X), sigma=1.0).value
        np.testing.assert_array_equal(np.diag(W), 0.0)
        np.testing.assert_allclose(W, W.T)
        assert np.all((W >= 0) & (W <= 1))

    def test_symmetric_normalize(self, rng):
        X = rng.standard_normal((6, 3))
        W = gaussian_kernel(pairwise_sq_distances(X), sigma=1.0).value
        A = symmetric_normalize(W).value
        d = W.sum(axis=1)
        np.testing.assert_allclose(A, W / np.sqrt(np.outer(d, d)))
        np.testing.assert_allclose(A, A.T)

    def test_transition_columns_sum_to_one(self, rng):
        X = rng.standard_normal((10, 4))
        y = rng.integers(0, 3, 10)
        graph = GraphBuilder('fixed', 1.0).build(Tape().constant(X))
        tm = column_stochastic(graph.A_norm, gamma_split(y, 0.5, seed=0))
        np.testing.assert_allclose(tm.T.value.sum(axis=0), 1.0, atol=1e-12)
        assert tm.T_uu.shape == (tm.masked_idx.size, tm.masked_idx.size)
        assert tm.T_ul.shape == (tm.masked_idx.size, tm.labeled_idx.size)
        np.testing.assert_array_equal(tm.T_ul.value, tm.T.value[np.ix_(tm.masked_idx, tm.labeled_idx)])

    def test_zero_degree_row(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [1e3, 1e3]])
        W = gaussian_kernel(pairwise_sq_distances(X), sigma=0.1)
        with pytest.raises(GraphError):
            symmetric_normalize(W)

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            pairwise_sq_distances(np.ones((1, 3)))
        with pytest.raises(ValidationError):
            pairwise_sq_distances(np.array([[np.nan, 1.0], [0.0, 1.0]]))
        with pytest.raises(ValidationError):
            gaussian_kernel(np.zeros((2, 2)), sigma=0.0)
        with pytest.raises(ValidationError):
            GraphBuilder('auto')

    def test_row_permutation_is_equivariant(self, rng):
        X = rng.standard_normal((9, 3))
        y = rng.integers(0, 3, 9)
        perm = rng.permutation(9)
        inverse = np.argsort(perm)
        split = gamma_split(y, 0.5, seed=2)
        moved = LabelSplit(inverse[split.labeled_idx], inverse[split.masked_idx], 0.5)

        builder = GraphBuilder('fixed', 1.0)
        graph = builder.build(Tape().constant(X))
        permuted = builder.build(Tape().constant(X[perm]))
        np.testing.assert_allclose(permuted.W.value, graph.W.value[np.ix_(perm, perm)], atol=1e-14)
        np.testing.assert_allclose(permuted.A_norm.value, graph.A_norm.value[np.ix_(perm, perm)], atol=1e-14)

        tm = column_stochastic(graph.A_norm, split)
        tm_permuted = column_stochastic(permuted.A_norm, moved)
        np.testing.assert_allclose(tm_permuted.T.value, tm.T.value[np.ix_(perm, perm)], atol=1e-14)
        np.testing.assert_allclose(tm_permuted.T_uu.value, tm.T_uu.value, atol=1e-14)
        np.testing.assert_allclose(tm_permuted.T_ul.value, tm.T_ul.value, atol=1e-14)

    def test_kernel_sigma_derivative(self, rng):
        D2 = pairwise_sq_distances(rng.standard_normal((6, 3))).value
        off = ~np.eye(6, dtype=bool)
        for sigma in (0.3, 1.0, 2.5):
            h = 1e-6 * sigma
            numeric = (gaussian_kernel(D2, sigma + h).value - gaussian_kernel(D2, sigma - h).value) / (2 * h)
            exact = D2 / sigma ** 3 * np.exp(-D2 / (2 * sigma * sigma))
            np.testing.assert_allclose(numeric[off], exact[off], rtol=1e-6, atol=1e-10)
            assert np.all(numeric[off] > 0)

    def test_gradient_reaches_embeddings(self, rng):
        tape = Tape()
        z = tape.variable(rng.standard_normal((5, 2)))
        graph = GraphBuilder('fixed', 1.0).build(z)
        grads = tape.backward(tape.reduce_sum(tape.multiply(graph.A_norm, rng.random((5, 5)))))
        assert np.any(grads[z] != 0)


class TestSigma:
    def test_sqrt_matches_brute_force_median(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 15))
            X = rng.standard_normal((n, int(rng.integers(1, 6)))) * rng.uniform(0.1, 5.0)
            d1 = _brute_median(X)
            assert median_sq_distance(X) == d1
            assert sigma_sqrt(X) == np.sqrt(d1 / 3.0)

    def test_inflection_at_sqrt_d_over_three(self, rng):
        for d in rng.uniform(0.5, 50.0, 20):
            star = np.sqrt(d / 3.0)
            h = 1e-3 * star

            def k(v):
                return np.exp(-d / (2.0 * v * v))

            def first(s):
                return (k(s + h) - k(s - h)) / (2.0 * h)

            def second(s):
                return (k(s + h) - 2.0 * k(s) + k(s - h)) / (h * h)
            assert second(0.9 * star) > 0
            assert second(1.1 * star) < 0
            assert first(0.9 * star) > 0 and first(1.1 * star) > 0
            assert first(star) > max(first(0.9 * star), first(1.1 * star))

    def test_zero_median(self):
        with pytest.raises(GraphError):
            sigma_sqrt(np.zeros((4, 2)))

    def test_multiplier_scales_both_modes(self, rng):
        X = rng.standard_normal((8, 3))
        assert GraphBuilder('fixed', 0.5, 2.0).resolve_sigma(X) == pytest.approx(1.0)
        assert GraphBuilder('sqrt', sigma_multiplier=1.5).resolve_sigma(X) == pytest.approx(1.5 * sigma_sqrt(X))
