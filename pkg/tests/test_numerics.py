import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfim.errors import DegenerateInputError, DimensionError, NumericError
from fedfim.numerics import (
    finite_difference_gradient,
    rel_err,
    stream,
    weighted_average,
)


class TestWeightedAverage:
    def test_equal_weight_mean(self):
        out = weighted_average([(1.0, 1.0), (3.0, 3.0)], [1.0, 1.0])
        np.testing.assert_allclose(out, [2.0, 2.0])

    def test_size_weights(self):
        # weights {1, 3} force 0.25 * 0 + 0.75 * 4
        out = weighted_average([(0.0, 0.0), (4.0, 4.0)], [1.0, 3.0])
        np.testing.assert_allclose(out, [3.0, 3.0])

    def test_single_vector_identity(self):
        v = np.array([2.5, -1.0, 7.0])
        np.testing.assert_array_equal(weighted_average([v], [0.7]), v)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_average([(1.0, 2.0), (1.0, 2.0, 3.0)], [1.0, 1.0])

    def test_zero_weight_sum(self):
        with pytest.raises(DegenerateInputError):
            weighted_average([(1.0, 2.0)], [0.0])

    @given(scale=st.floats(min_value=1e-6, max_value=1e6))
    @settings(max_examples=50, deadline=None)
    def test_invariant_under_weight_scaling(self, scale):
        rng = np.random.default_rng(7)
        vs = rng.standard_normal((4, 3))
        w = rng.random(4) + 0.1
        base = weighted_average(list(vs), w)
        scaled = weighted_average(list(vs), w * scale)
        assert rel_err(base, scaled) < 1e-12

    def test_pure(self):
        vs = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        w = [0.3, 0.7]
        a = weighted_average(vs, w)
        b = weighted_average(vs, w)
        assert np.array_equal(a, b)


class TestFiniteDifferences:
    def test_quadratic_is_exact(self):
        f = lambda w: 0.5 * float(w @ w)
        g = finite_difference_gradient(f, np.array([1.0, 2.0]), h=1e-5)
        np.testing.assert_allclose(g, [1.0, 2.0], atol=1e-8)

    def test_constant_function(self):
        g = finite_difference_gradient(lambda w: 3.25, np.array([0.4, -1.0, 2.0]))
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_product_rule(self):
        f = lambda w: float(w[0] * w[1])
        g = finite_difference_gradient(f, np.array([2.0, 3.0]))
        np.testing.assert_allclose(g, [3.0, 2.0], atol=1e-9)

    def test_nonfinite_probe_rejected(self):
        with pytest.raises(NumericError):
            finite_difference_gradient(lambda w: float("nan"), np.array([1.0]))

    def test_bad_h(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda w: 0.0, np.array([1.0]), h=0.0)


class TestStreams:
    def test_same_seed_same_draws(self):
        a = stream(42, 3).random(100)
        b = stream(42, 3).random(100)
        assert np.array_equal(a, b)

    def test_distinct_stream_ids_differ(self):
        a = stream(42, 0).random(100)
        b = stream(42, 1).random(100)
        assert not np.array_equal(a, b)

    def test_distinct_seeds_differ(self):
        assert not np.array_equal(stream(1, 0).random(50), stream(2, 0).random(50))

    def test_shuffle_is_permutation(self):
        perm = stream(9, 0).permutation(100)
        assert np.array_equal(np.sort(perm), np.arange(100))

    def test_subset_sample_distinct(self):
        picked = stream(9, 1).choice(50, size=20, replace=False)
        assert len(np.unique(picked)) == 20

    def test_normal_and_uniform_reproducible(self):
        g1, g2 = stream(5, 5), stream(5, 5)
        assert np.array_equal(g1.standard_normal(10), g2.standard_normal(10))
        assert np.array_equal(g1.uniform(-1, 1, 10), g2.uniform(-1, 1, 10))

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            stream(-1, 0)


def test_rel_err_convention():
    # |a - b| / max(1, |a|, |b|)
    assert rel_err(0.0, 0.5) == 0.5
    assert rel_err(200.0, 100.0) == pytest.approx(0.5)
    assert rel_err(np.zeros(3), np.zeros(3)) == 0.0
