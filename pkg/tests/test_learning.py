import struct

import numpy as np
import pytest

from aou_fedsched import streams
from aou_fedsched.errors import ConfigError, FormatError
from aou_fedsched.learning import (
    LearningConfig,
    LocalDataset,
    aggregate,
    empirical_objective,
    evaluate,
    generate_synthetic,
    load_dataset_csv,
    load_idx,
    local_update,
    loss_and_subgradient,
    partition_dataset,
    regularizer_and_gradient,
    save_dataset_csv,
)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestHinge:
    def test_zero_weights_unit_loss(self):
        x = np.array([2.0, -1.0, 0.5])
        loss, grad = loss_and_subgradient(np.zeros(3), x, 1.0)
        assert loss == 1.0
        np.testing.assert_array_equal(grad, -x)

    def test_beyond_margin_is_flat(self):
        w = np.array([2.0, 0.0])
        loss, grad = loss_and_subgradient(w, np.array([1.0, 5.0]), 1.0)  # margin 2
        assert loss == 0.0
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_hand_value_inside_margin(self):
        loss, grad = loss_and_subgradient(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 1.0)
        assert loss == pytest.approx(0.5)
        np.testing.assert_allclose(grad, [-0.5, -0.5])

    def test_kink_takes_zero_side(self):
        # margin exactly 1: flat-side subgradient
        loss, grad = loss_and_subgradient(np.array([1.0]), np.array([1.0]), 1.0)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, [0.0])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            loss_and_subgradient(np.zeros(2), np.zeros(3), 1.0)

    def test_matches_finite_differences_away_from_kink(self):
        gen = rng(1)
        step = 1e-6
        checked = 0
        for _ in range(300):
            d = int(gen.integers(2, 8))
            w = gen.normal(size=d)
            x = gen.normal(size=d)
            y = float(gen.choice([-1.0, 1.0]))
            if abs(y * float(w @ x) - 1.0) < 1e-3:
                continue  # too close to the kink for finite differences
            _, grad = loss_and_subgradient(w, x, y)
            for j in range(d):
                e = np.zeros(d)
                e[j] = step
                hi, _ = loss_and_subgradient(w + e, x, y)
                lo, _ = loss_and_subgradient(w - e, x, y)
                fd = (hi - lo) / (2 * step)
                assert fd == pytest.approx(grad[j], rel=1e-5, abs=1e-7)
            checked += 1
        assert checked > 200


class TestRegularizer:
    def test_zero(self):
        value, grad = regularizer_and_gradient(np.zeros(4))
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros(4))

    def test_hand_value(self):
        value, grad = regularizer_and_gradient(np.array([3.0, 4.0]))
        assert value == 12.5
        np.testing.assert_array_equal(grad, [3.0, 4.0])

    def test_matches_finite_differences(self):
        gen = rng(2)
        step = 1e-6
        for _ in range(50):
            w = gen.normal(size=5)
            _, grad = regularizer_and_gradient(w)
            for j in range(5):
                e = np.zeros(5)
                e[j] = step
                fd = (regularizer_and_gradient(w + e)[0] - regularizer_and_gradient(w - e)[0]) / (2 * step)
                assert fd == pytest.approx(grad[j], rel=1e-6, abs=1e-9)


class TestLocalUpdate:
    def test_zero_step_size_returns_global_model(self):
        data = LocalDataset(features=rng().normal(size=(10, 3)), labels=np.ones(10))
        cfg = LearningConfig(step_size=0.0, local_steps=7)
        w = np.array([0.3, -0.2, 0.9])
        out = local_update(w, data, cfg, streams.substream(0, streams.LOCAL_SGD, 0, 0))
        np.testing.assert_array_equal(out, w)
        assert out is not w  # caller's model is never mutated

    def test_single_step_hand_computation(self):
        data = LocalDataset(features=np.array([[0.5, 0.5]]), labels=np.array([1.0]))
        cfg = LearningConfig(step_size=0.1, local_steps=1, regularizer_weight=0.01)
        w = np.array([1.0, 0.0])
        out = local_update(w, data, cfg, streams.substream(3, streams.LOCAL_SGD, 0, 0))
        # margin 0.5 < 1: subgradient -x; plus 0.01 * w from the penalty
        expected = w - 0.1 * (np.array([-0.5, -0.5]) + 0.01 * w)
        np.testing.assert_allclose(out, expected)

    def test_deterministic_given_stream(self):
        data = LocalDataset(features=rng(5).normal(size=(30, 4)), labels=np.sign(rng(6).normal(size=30) + 0.1))
        cfg = LearningConfig(step_size=0.05, local_steps=9)
        w = rng(7).normal(size=4)
        a = local_update(w, data, cfg, streams.substream(11, streams.LOCAL_SGD, 2, 4))
        b = local_update(w, data, cfg, streams.substream(11, streams.LOCAL_SGD, 2, 4))
        np.testing.assert_array_equal(a, b)


class TestAggregate:
    def test_single_model_is_identity(self):
        w = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(aggregate([w], [5]), w)

    def test_equal_sizes_give_mean(self):
        out = aggregate([np.array([1.0, 0.0]), np.array([0.0, 1.0])], [3, 3])
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_weighted_hand_value(self):
        out = aggregate([np.array([1.0, 0.0]), np.array([0.0, 1.0])], [1, 3])
        np.testing.assert_allclose(out, [0.25, 0.75])

    def test_permutation_invariant(self):
        models = [rng(i).normal(size=4) for i in range(5)]
        sizes = [2, 7, 1, 9, 4]
        a = aggregate(models, sizes)
        order = [3, 0, 4, 2, 1]
        b = aggregate([models[i] for i in order], [sizes[i] for i in order])
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_idempotent_on_identical_inputs(self):
        w = rng(9).normal(size=6)
        np.testing.assert_allclose(aggregate([w, w, w], [1, 5, 2]), w)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], [])


class TestPartition:
    def make_pool(self, n=100, d=3):
        labels = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        return LocalDataset(features=rng(3).normal(size=(n, d)), labels=labels)

    @pytest.mark.parametrize("scheme", ["iid", "shard"])
    def test_exact_partition(self, scheme):
        pool = self.make_pool(101)
        parts = partition_dataset(pool, 7, scheme, rng(1))
        assert len(parts) == 7
        assert sum(p.size for p in parts) == 101
        # disjoint cover: every original row appears exactly once
        stacked = np.vstack([p.features for p in parts])
        assert stacked.shape == pool.features.shape
        original = {tuple(row) for row in pool.features}
        assert {tuple(row) for row in stacked} == original

    def test_iid_equal_sizes_when_divisible(self):
        parts = partition_dataset(self.make_pool(100), 10, "iid", rng(1))
        assert all(p.size == 10 for p in parts)

    def test_shard_two_labels_two_parts_single_label(self):
        pool = self.make_pool(40)
        parts = partition_dataset(pool, 2, "shard", rng(1))
        for p in parts:
            assert len(np.unique(p.labels)) == 1

    def test_too_many_parts_rejected(self):
        with pytest.raises(ConfigError):
            partition_dataset(self.make_pool(5), 6, "iid", rng(0))

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError):
            partition_dataset(self.make_pool(), 4, "sorted", rng(0))


class TestSynthetic:
    def test_separable_by_generating_hyperplane(self):
        data, normal = generate_synthetic(500, 8, 1.0, rng(4))
        margins = data.labels * (data.features @ normal)
        assert np.all(margins >= 0.5 - 1e-12)  # half the slab width

    def test_label_balance(self):
        data, _ = generate_synthetic(2000, 5, 1.0, rng(5))
        positive = float(np.mean(data.labels == 1.0))
        assert abs(positive - 0.5) < 0.1

    def test_reproducible(self):
        a, na = generate_synthetic(50, 3, 0.5, rng(6))
        b, nb = generate_synthetic(50, 3, 0.5, rng(6))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(na, nb)


def write_idx_pair(tmp_path, labels, name="train"):
    labels = np.asarray(labels, dtype=np.uint8)
    count = len(labels)
    images_path = tmp_path / f"{name}-images-idx3-ubyte"
    labels_path = tmp_path / f"{name}-labels-idx1-ubyte"
    pixels = (np.arange(count * 4) % 256).astype(np.uint8)
    images_path.write_bytes(struct.pack(">IIII", 0x803, count, 2, 2) + pixels.tobytes())
    labels_path.write_bytes(struct.pack(">II", 0x801, count) + labels.tobytes())
    return images_path, labels_path


class TestIdxLoader:
    def test_loads_two_digits_with_bias(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, [3, 5, 3, 5, 1, 3, 5, 9])
        data = load_idx(images, labels, 3, 5)
        assert data.size == 6
        assert data.dimension == 5  # 2x2 pixels + bias
        assert set(np.unique(data.labels)) == {-1.0, 1.0}
        assert np.all(data.features[:, -1] == 1.0)
        assert np.all((0.0 <= data.features) & (data.features <= 1.0))

    def test_digit_signs(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, [3, 5])
        data = load_idx(images, labels, 3, 5)
        np.testing.assert_array_equal(data.labels, [1.0, -1.0])

    def test_bad_magic_rejected(self, tmp_path):
        bogus = tmp_path / "zero"
        bogus.write_bytes(bytes(16))
        _, labels = write_idx_pair(tmp_path, [3, 5])
        with pytest.raises(FormatError, match="magic"):
            load_idx(bogus, labels, 3, 5)

    def test_truncated_file_rejected(self, tmp_path):
        images, labels = write_idx_pair(tmp_path, [3, 5, 3])
        raw = images.read_bytes()
        images.write_bytes(raw[:-1])
        with pytest.raises(FormatError, match="bytes"):
            load_idx(images, labels, 3, 5)

    def test_count_mismatch_rejected(self, tmp_path):
        images, _ = write_idx_pair(tmp_path, [3, 5, 3, 5])
        _, labels = write_idx_pair(tmp_path, [3, 5], name="short")
        with pytest.raises(FormatError, match="count"):
            load_idx(images, labels, 3, 5)


class TestEvaluate:
    def test_perfect_and_negated_model(self):
        data, normal = generate_synthetic(200, 4, 1.0, rng(8))
        assert evaluate(normal, data) == 1.0
        assert evaluate(-normal, data) == 0.0

    def test_zero_model_on_balanced_data(self):
        features = rng(9).normal(size=(100, 3))
        labels = np.array([1.0, -1.0] * 50)
        data = LocalDataset(features=features, labels=labels)
        assert evaluate(np.zeros(3), data) == 0.5  # sign(0) counts as +1


class TestConvexDescentSanity:
    def test_full_batch_gradient_descent_is_monotone(self):
        data, _ = generate_synthetic(60, 3, 1.0, rng(10))
        reg = 0.01
        w = 0.01 * rng(11).normal(size=data.dimension)
        losses = [empirical_objective(w, data, reg)]
        for _ in range(250):
            grads = np.zeros_like(w)
            for i in range(data.size):
                _, g = loss_and_subgradient(w, data.features[i], data.labels[i])
                grads += g
            grads = grads / data.size + reg * w
            w = w - 0.02 * grads
            losses.append(empirical_objective(w, data, reg))
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)
        assert losses[-1] < losses[0]


class TestCsvRoundtrip:
    def test_save_load_roundtrip(self, tmp_path):
        data, _ = generate_synthetic(25, 4, 1.0, rng(12))
        path = tmp_path / "data.csv"
        save_dataset_csv(data, path)
        loaded = load_dataset_csv(path)
        np.testing.assert_allclose(loaded.features, data.features, rtol=1e-15)
        np.testing.assert_array_equal(loaded.labels, data.labels)

    def test_malformed_csv_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0\n-1.0\n")
        with pytest.raises(FormatError):
            load_dataset_csv(path)
