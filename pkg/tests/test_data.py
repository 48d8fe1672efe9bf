import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedfim.data import (
    Dataset,
    load_csv,
    load_idx,
    partition_iid,
    partition_noniid_l,
    share_subset,
    synth_logistic,
)
from fedfim.errors import ConfigError, DataConsistencyError, DataFormatError
from fedfim.models import ModelSpec, batch_gradient, accuracy


def write_idx_pair(tmp_path, pixels, labels, image_magic=0x00000803, label_magic=0x00000801):
    """Build raw IDX bytes by hand; pixels is a (n, rows, cols) uint8 array."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    images_path = tmp_path / "images-idx3-ubyte"
    labels_path = tmp_path / "labels-idx1-ubyte"
    images_path.write_bytes(struct.pack(">IIII", image_magic, n, rows, cols) + pixels.tobytes())
    labels_path.write_bytes(struct.pack(">II", label_magic, len(labels)) + bytes(labels))
    return images_path, labels_path


class TestIdxLoader:
    def test_fixture_roundtrip_exact(self, tmp_path):
        pixels = np.array(
            [[[0, 128], [255, 64]],
             [[1, 2], [3, 4]]], dtype=np.uint8)
        images, labels = write_idx_pair(tmp_path, pixels, [1, 0])
        ds = load_idx(images, labels)
        assert len(ds) == 2 and ds.input_dim == 4
        np.testing.assert_array_equal(ds.features[0], np.array([0, 128, 255, 64]) / 255.0)
        np.testing.assert_array_equal(ds.features[1], np.array([1, 2, 3, 4]) / 255.0)
        np.testing.assert_array_equal(ds.labels, [1, 0])
        assert ds.num_classes == 2

    def test_corrupted_image_magic(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0],
                                        image_magic=0xDEADBEEF)
        with pytest.raises(DataFormatError):
            load_idx(images, labels)

    def test_corrupted_label_magic(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0],
                                        label_magic=0x00000777)
        with pytest.raises(DataFormatError):
            load_idx(images, labels)

    def test_count_mismatch(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1, 1])
        with pytest.raises(DataConsistencyError):
            load_idx(images, labels)

    def test_truncated_file(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
        images.write_bytes(images.read_bytes()[:-3])
        with pytest.raises(OSError):
            load_idx(images, labels)

    def test_determinism(self, tmp_path):
        pixels = np.arange(16, dtype=np.uint8).reshape(1, 4, 4)
        images, labels = write_idx_pair(tmp_path, pixels, [3])
        a = load_idx(images, labels)
        b = load_idx(images, labels)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)


class TestCsvLoader:
    def test_small_fixture(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text("f0,f1,label\n1.0,5.0,3\n2.0,5.0,7\n3.0,5.0,3\n4.0,5.0,7\n")
        ds = load_csv(path, "label")
        assert len(ds) == 4 and ds.num_classes == 2
        np.testing.assert_array_equal(ds.labels, [0, 1, 0, 1])  # {3,7} densified
        # constant column standardized to zeros, varying column zero-mean unit-sd
        np.testing.assert_array_equal(ds.features[:, 1], np.zeros(4))
        assert abs(ds.features[:, 0].mean()) < 1e-12
        assert ds.features[:, 0].std() == pytest.approx(1.0)

    def test_missing_label_column(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataFormatError):
            load_csv(path, "label")

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text("a,b,label\n1,2,0\n1,0\n")
        with pytest.raises(DataFormatError):
            load_csv(path, "label")

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text("a,b,label\n1,x,0\n")
        with pytest.raises(DataFormatError):
            load_csv(path, "label")


class TestSynth:
    def test_determinism(self):
        a = synth_logistic(50, 4, 3, 2.0, seed=9)
        b = synth_logistic(50, 4, 3, 2.0, seed=9)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert not np.array_equal(a.labels, synth_logistic(50, 4, 3, 2.0, seed=10).labels)

    def test_margin_limit_is_argmax(self):
        ds = synth_logistic(300, 6, 4, 1e6, seed=2)
        hard = (ds.features @ ds.truth.T).argmax(axis=1)
        np.testing.assert_array_equal(ds.labels, hard)

    def test_centralized_fit_reaches_09(self):
        # independent oracle: full-batch gradient descent on the pooled data
        ds = synth_logistic(2000, 20, 10, 5.0, seed=4)
        spec = ModelSpec("softmax-regression", 20, 10)
        w = np.zeros(spec.dim)
        for _ in range(250):
            w -= 0.5 * batch_gradient(spec, w, ds.features, ds.labels)
        assert accuracy(spec, w, ds.features, ds.labels) >= 0.9


def _assert_disjoint_covering(plan, n):
    seen = np.concatenate(plan.assignment)
    assert len(seen) == n
    assert np.array_equal(np.sort(seen), np.arange(n))
    for idx in plan.assignment:
        assert len(idx) > 0


class TestPartitionIid:
    def test_one_sample_each(self):
        ds = synth_logistic(100, 3, 2, 2.0, seed=0)
        plan = partition_iid(ds, 100, seed=1)
        assert all(len(a) == 1 for a in plan.assignment)
        _assert_disjoint_covering(plan, 100)

    def test_disjoint_covering_and_balanced(self):
        ds = synth_logistic(103, 3, 2, 2.0, seed=0)
        plan = partition_iid(ds, 10, seed=1)
        _assert_disjoint_covering(plan, 103)
        sizes = [len(a) for a in plan.assignment]
        assert max(sizes) - min(sizes) <= 1

    def test_label_histograms_close_to_global(self):
        ds = synth_logistic(2000, 10, 5, 3.0, seed=3)
        plan = partition_iid(ds, 20, seed=3)  # 100 samples per client
        global_hist = np.bincount(ds.labels, minlength=5) / len(ds)
        for idx in plan.assignment:
            local = np.bincount(ds.labels[idx], minlength=5) / len(idx)
            tv = 0.5 * np.abs(local - global_hist).sum()
            assert tv < 0.2

    def test_too_many_clients(self):
        ds = synth_logistic(5, 3, 2, 2.0, seed=0)
        with pytest.raises(ConfigError):
            partition_iid(ds, 6, seed=0)

    def test_deterministic(self):
        ds = synth_logistic(60, 3, 2, 2.0, seed=0)
        a = partition_iid(ds, 6, seed=5)
        b = partition_iid(ds, 6, seed=5)
        for x, y in zip(a.assignment, b.assignment):
            assert np.array_equal(x, y)


class TestPartitionNonIid:
    def test_paper_shape_k100_l2(self):
        ds = synth_logistic(4000, 8, 10, 6.0, seed=1)
        plan = partition_noniid_l(ds, 100, 2, seed=1)
        _assert_disjoint_covering(plan, 4000)
        for labels in plan.label_sets(ds):
            assert len(labels) == 2

    def test_l_equals_n_boundary(self):
        ds = synth_logistic(1000, 6, 5, 6.0, seed=2)
        plan = partition_noniid_l(ds, 10, 5, seed=2)
        _assert_disjoint_covering(plan, 1000)
        for labels in plan.label_sets(ds):
            assert len(labels) == 5

    @pytest.mark.parametrize("l", [2, 3, 5])
    def test_exact_label_count_grid(self, l):
        ds = synth_logistic(3000, 10, 10, 5.0, seed=7)
        plan = partition_noniid_l(ds, 100, l, seed=7)
        _assert_disjoint_covering(plan, 3000)
        for labels in plan.label_sets(ds):
            assert len(labels) == l

    def test_divisibility_error_names_constraint(self):
        ds = synth_logistic(500, 5, 3, 4.0, seed=0)
        with pytest.raises(ConfigError, match="divisible"):
            partition_noniid_l(ds, 10, 2, seed=0)  # 2*10 % 3 != 0

    def test_tiny_label_group_error(self):
        features = np.random.default_rng(0).standard_normal((30, 3))
        labels = np.array([0] * 28 + [1] * 2)
        ds = Dataset(features, labels, 2)
        # label 1 has 2 samples but needs (3*2)/2 = 3 shards
        with pytest.raises(ConfigError, match="shards"):
            partition_noniid_l(ds, 3, 2, seed=0)

    def test_deterministic(self):
        ds = synth_logistic(600, 4, 6, 5.0, seed=8)
        a = partition_noniid_l(ds, 12, 3, seed=8)
        b = partition_noniid_l(ds, 12, 3, seed=8)
        for x, y in zip(a.assignment, b.assignment):
            assert np.array_equal(x, y)

    @given(st.integers(min_value=0, max_value=1000))
    @settings(max_examples=15, deadline=None)
    def test_property_random_seeds(self, seed):
        ds = synth_logistic(900, 4, 6, 5.0, seed=3)
        plan = partition_noniid_l(ds, 12, 2, seed=seed)
        _assert_disjoint_covering(plan, 900)
        for labels in plan.label_sets(ds):
            assert len(labels) == 2


class TestShareSubset:
    def test_size_rule(self):
        ds = synth_logistic(1000, 4, 4, 3.0, seed=1)
        shared = share_subset(ds, 0.1, num_clients=10, seed=1)
        assert len(shared) == 10  # round(0.1 * 1000/10)
        assert len(np.unique(shared)) == len(shared)

    def test_zero_size_rejected(self):
        ds = synth_logistic(100, 4, 4, 3.0, seed=1)
        with pytest.raises(ConfigError):
            share_subset(ds, 0.01, num_clients=50, seed=1)  # round(0.01 * 2) == 0

    def test_beta_out_of_range(self):
        ds = synth_logistic(100, 4, 4, 3.0, seed=1)
        with pytest.raises(ConfigError):
            share_subset(ds, 0.0, num_clients=10, seed=1)
        with pytest.raises(ConfigError):
            share_subset(ds, 1.5, num_clients=10, seed=1)

    def test_identical_across_calls(self):
        ds = synth_logistic(500, 4, 4, 3.0, seed=6)
        a = share_subset(ds, 0.2, num_clients=10, seed=6)
        b = share_subset(ds, 0.2, num_clients=10, seed=6)
        assert np.array_equal(a, b)
