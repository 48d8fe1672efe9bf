import numpy as np
import pytest

from conftest import all_kinds, random_instance
from fedfim.errors import DimensionError
from fedfim.models import (
    ModelSpec,
    accuracy,
    batch_gradient,
    forward_loss,
    init_params,
    per_sample_gradients,
    predict_proba,
)
from fedfim.numerics import finite_difference_gradient, rel_err


class TestSpec:
    def test_param_counts(self):
        assert ModelSpec("binary-logistic", 7).dim == 7
        assert ModelSpec("softmax-regression", 7, 10).dim == 70
        assert ModelSpec("mlp1", 7, 10, hidden_dim=5).dim == 5 * 7 + 10 * 5

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelSpec("perceptron", 3)
        with pytest.raises(ValueError):
            ModelSpec("binary-logistic", 3, num_classes=4)
        with pytest.raises(ValueError):
            ModelSpec("mlp1", 3, 3, hidden_dim=0)

    def test_init_bounds(self, rng):
        spec = ModelSpec("softmax-regression", 16, 4)
        w = init_params(spec, rng)
        assert np.all(np.abs(w) <= 1.0 / 4.0)
        spec = ModelSpec("mlp1", 4, 3, hidden_dim=9)
        w = init_params(spec, rng)
        assert np.all(np.abs(w[: 9 * 4]) <= 0.5)
        assert np.all(np.abs(w[9 * 4 :]) <= 1.0 / 3.0)


class TestLossAtZero:
    def test_softmax_uniform(self, rng):
        spec = ModelSpec("softmax-regression", 6, 10)
        X = rng.standard_normal((5, 6))
        y = rng.integers(0, 10, 5)
        assert forward_loss(spec, np.zeros(spec.dim), X, y) == pytest.approx(np.log(10), abs=1e-12)

    def test_binary_ln2(self, rng):
        spec = ModelSpec("binary-logistic", 6)
        X = rng.standard_normal((5, 6))
        y = rng.integers(0, 2, 5)
        assert forward_loss(spec, np.zeros(6), X, y) == pytest.approx(np.log(2), abs=1e-12)

    def test_mlp_zero_output_layer(self, rng):
        spec = ModelSpec("mlp1", 4, 7, hidden_dim=3)
        w = init_params(spec, rng)
        w[4 * 3 :] = 0.0  # zero the output layer: logits vanish
        X = rng.standard_normal((8, 4))
        y = rng.integers(0, 7, 8)
        assert forward_loss(spec, w, X, y) == pytest.approx(np.log(7), abs=1e-12)


class TestGradients:
    def test_binary_zero_weights_single_sample(self):
        # (sigma - y) x with sigma = 0.5
        spec = ModelSpec("binary-logistic", 2)
        g = batch_gradient(spec, np.zeros(2), np.array([[1.0, 0.0]]), np.array([1]))
        np.testing.assert_allclose(g, [-0.5, 0.0], atol=1e-15)

    def test_duplicated_batch_mean_invariance(self, rng):
        for kind in all_kinds():
            spec, w, X, y = random_instance(kind, rng)
            g1 = batch_gradient(spec, w, X, y)
            g2 = batch_gradient(spec, w, np.vstack([X, X]), np.concatenate([y, y]))
            assert rel_err(g1, g2) < 1e-12

    def test_matches_finite_differences_small_mlp(self, rng):
        spec, w, X, y = random_instance("mlp1", rng, max_input=5, max_classes=4, max_hidden=4)
        assert spec.dim <= 50
        g = batch_gradient(spec, w, X, y)
        fd = finite_difference_gradient(lambda v: forward_loss(spec, v, X, y), w)
        assert rel_err(g, fd) < 1e-5

    @pytest.mark.parametrize("kind", all_kinds())
    def test_gradient_check_20_instances(self, kind, rng):
        for _ in range(20):
            spec, w, X, y = random_instance(kind, rng, max_input=10, max_classes=6, max_hidden=6)
            assert spec.dim <= 100
            g = batch_gradient(spec, w, X, y)
            fd = finite_difference_gradient(lambda v: forward_loss(spec, v, X, y), w)
            assert rel_err(g, fd) < 1e-5

    def test_permutation_invariance(self, rng):
        for kind in all_kinds():
            spec, w, X, y = random_instance(kind, rng)
            perm = rng.permutation(len(y))
            assert forward_loss(spec, w, X, y) == pytest.approx(
                forward_loss(spec, w, X[perm], y[perm]), rel=1e-12
            )
            assert rel_err(batch_gradient(spec, w, X, y),
                           batch_gradient(spec, w, X[perm], y[perm])) < 1e-12

    def test_dimension_errors(self):
        spec = ModelSpec("softmax-regression", 3, 4)
        with pytest.raises(DimensionError):
            forward_loss(spec, np.zeros(5), np.zeros((2, 3)), np.zeros(2, dtype=int))
        with pytest.raises(DimensionError):
            forward_loss(spec, np.zeros(12), np.zeros((2, 4)), np.zeros(2, dtype=int))
        with pytest.raises(DimensionError):
            forward_loss(spec, np.zeros(12), np.zeros((2, 3)), np.zeros(3, dtype=int))


class TestPerSampleGradients:
    def test_single_sample_equals_batch(self, rng):
        for kind in all_kinds():
            spec, w, X, y = random_instance(kind, rng, batch=1)
            rows = per_sample_gradients(spec, w, X, y)
            assert rows.shape == (1, spec.dim)
            assert rel_err(rows[0], batch_gradient(spec, w, X, y)) < 1e-14

    def test_binary_two_sample_rows(self):
        spec = ModelSpec("binary-logistic", 2)
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([1, 0])
        rows = per_sample_gradients(spec, np.zeros(2), X, y)
        np.testing.assert_allclose(rows, [[-0.5, 0.0], [0.0, 0.5]], atol=1e-15)

    def test_row_mean_equals_batch_gradient(self, rng):
        for kind in all_kinds():
            for _ in range(5):
                spec, w, X, y = random_instance(kind, rng)
                rows = per_sample_gradients(spec, w, X, y)
                np.testing.assert_allclose(
                    rows.mean(axis=0), batch_gradient(spec, w, X, y), atol=1e-12
                )


class TestPredictProba:
    def test_zero_weights_uniform(self, rng):
        spec = ModelSpec("softmax-regression", 4, 5)
        P = predict_proba(spec, np.zeros(spec.dim), rng.standard_normal((6, 4)))
        np.testing.assert_allclose(P, np.full((6, 5), 0.2), atol=1e-15)

    def test_binary_zero_weights_half(self, rng):
        spec = ModelSpec("binary-logistic", 4)
        P = predict_proba(spec, np.zeros(4), rng.standard_normal((3, 4)))
        np.testing.assert_allclose(P, np.full((3, 2), 0.5), atol=1e-15)

    def test_rows_are_distributions(self, rng):
        for kind in all_kinds():
            spec, w, X, _ = random_instance(kind, rng)
            P = predict_proba(spec, w, X)
            np.testing.assert_allclose(P.sum(axis=1), np.ones(len(X)), atol=1e-9)
            assert np.all(P > 0) and np.all(P < 1)

    def test_scaling_weights_sharpens_argmax(self, rng):
        spec, w, X, _ = random_instance("softmax-regression", rng)
        P1 = predict_proba(spec, w, X)
        P2 = predict_proba(spec, 2.0 * w, X)
        j = np.argmax(P1[0])
        assert P2[0, j] > P1[0, j]

    def test_accuracy_helper(self):
        spec = ModelSpec("softmax-regression", 2, 2)
        w = np.array([1.0, 0.0, 0.0, 1.0])  # class 0 favors x0, class 1 favors x1
        X = np.array([[3.0, 0.0], [0.0, 3.0]])
        assert accuracy(spec, w, X, np.array([0, 1])) == 1.0
