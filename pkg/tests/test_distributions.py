import gzip
import struct

import numpy as np
import pytest

from distclust.distributions import (
    BadMagicError,
    DimensionMismatchError,
    DiscreteDistribution,
    DistributionSet,
    EmptySupportError,
    LabelCountMismatchError,
    NegativeSigmaError,
    NegativeWeightError,
    NonFiniteSupportError,
    ParseError,
    SchemaError,
    SyntheticConfig,
    TruncatedFileError,
    WeightSumMismatchError,
    add_gaussian_noise,
    generate_synthetic,
    load_idx_images,
    load_jsonl,
    save_jsonl,
    set_content_hash,
    set_to_jsonl,
    subsample_support,
    validate,
)


def make(support, weights, dist_id="t", label=None):
    return DiscreteDistribution(id=dist_id, support=np.asarray(support, float),
                                weights=np.asarray(weights, float), label=label)


class TestValidate:
    def test_valid_simplex_ok(self):
        validate(make([[0.0], [1.0]], [0.5, 0.5]))

    def test_weight_sum_mismatch(self):
        with pytest.raises(WeightSumMismatchError):
            validate(make([[0.0], [1.0]], [0.6, 0.6]))

    def test_negative_weight_names_index(self):
        with pytest.raises(NegativeWeightError) as err:
            validate(make([[0.0], [1.0]], [1.0, -1e-12]))
        assert err.value.index == 1

    def test_nonfinite_support_names_row(self):
        with pytest.raises(NonFiniteSupportError) as err:
            validate(make([[0.0], [np.inf]], [0.5, 0.5]))
        assert err.value.index == 1

    def test_empty_support(self):
        with pytest.raises(EmptySupportError):
            validate(DiscreteDistribution("e", np.zeros((0, 2)), np.zeros(0)))

    def test_weight_sum_tolerance(self):
        validate(make([[0.0]], [1.0 + 5e-10]))


class TestSet:
    def test_needs_two_members(self):
        with pytest.raises(ValueError):
            DistributionSet([make([[0.0]], [1.0])])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            DistributionSet([make([[0.0]], [1.0], "a"), make([[1.0]], [1.0], "a")])

    def test_mixed_dimension_rejected(self):
        with pytest.raises(DimensionMismatchError):
            DistributionSet([
                make([[0.0]], [1.0], "a"),
                make([[1.0, 2.0]], [1.0], "b"),
            ])


class TestSynthetic:
    def test_default_shape(self, default_set):
        assert default_set.N == 40
        assert default_set.d == 2
        assert all(d.m == 40 for d in default_set)
        assert sorted(set(d.label for d in default_set)) == [0, 1]

    def test_minimal_set(self):
        dset = generate_synthetic(SyntheticConfig(n_per_class=1))
        assert dset.N == 2
        assert [d.label for d in dset] == [0, 1]

    def test_deterministic_bytes(self):
        a = generate_synthetic(SyntheticConfig(seed=42))
        b = generate_synthetic(SyntheticConfig(seed=42))
        assert set_to_jsonl(a) == set_to_jsonl(b)

    def test_seed_changes_output(self):
        a = generate_synthetic(SyntheticConfig(seed=1))
        b = generate_synthetic(SyntheticConfig(seed=2))
        assert set_to_jsonl(a) != set_to_jsonl(b)

    def test_uniform_weights(self, default_set):
        for dist in default_set:
            assert np.all(dist.weights == 1.0 / dist.m)

    def test_means_sit_on_the_center_ring(self, default_set):
        # boundary points are antipodally paired, so each mean is its center
        radii = np.array([np.linalg.norm(d.mean) for d in default_set])
        assert np.allclose(radii, SyntheticConfig.ring_radius, atol=1e-9)


class TestJsonl:
    def test_round_trip_identity(self, tmp_path, default_set):
        path = tmp_path / "set.jsonl"
        save_jsonl(default_set, path)
        loaded = load_jsonl(path)
        assert set_to_jsonl(loaded) == set_to_jsonl(default_set)
        assert set_content_hash(loaded) == set_content_hash(default_set)
        for a, b in zip(default_set, loaded):
            assert np.array_equal(a.support, b.support)
            assert np.array_equal(a.weights, b.weights)
            assert a.label == b.label

    def test_missing_weights_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "support": [[0.0]]}\n'
                        '{"id": "b", "support": [[1.0]], "weights": [1.0]}\n')
        with pytest.raises(SchemaError) as err:
            load_jsonl(path)
        assert err.value.fieldname == "weights"

    def test_bad_json_is_parse_error_with_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "weights": [1.0], "support": [[0.0]]}\n{oops\n')
        with pytest.raises(ParseError) as err:
            load_jsonl(path)
        assert err.value.line == 2

    def test_mixed_dimensions_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"id": "a", "weights": [1.0], "support": [[0.0]]}\n'
            '{"id": "b", "weights": [1.0], "support": [[0.0, 1.0]]}\n'
        )
        with pytest.raises(DimensionMismatchError):
            load_jsonl(path)


def idx_image_bytes(images: np.ndarray) -> bytes:
    count, h, w = images.shape
    return struct.pack(">IIII", 0x803, count, h, w) + images.astype(np.uint8).tobytes()


def idx_label_bytes(labels: np.ndarray) -> bytes:
    return struct.pack(">II", 0x801, len(labels)) + labels.astype(np.uint8).tobytes()


class TestIdx:
    def make_files(self, tmp_path, images, labels, gz=False):
        ib, lb = idx_image_bytes(images), idx_label_bytes(labels)
        if gz:
            ib, lb = gzip.compress(ib), gzip.compress(lb)
        ipath, lpath = tmp_path / "img.idx", tmp_path / "lab.idx"
        ipath.write_bytes(ib)
        lpath.write_bytes(lb)
        return ipath, lpath

    def sample_images(self, rng, count=12, side=6):
        images = np.zeros((count, side, side), dtype=np.uint8)
        for k in range(count):
            lit = rng.integers(1, 8)
            rr = rng.integers(0, side, size=lit)
            cc = rng.integers(0, side, size=lit)
            images[k, rr, cc] = rng.integers(1, 255, size=lit)
        labels = np.repeat([0, 1, 2], count // 3)
        return images, labels

    def test_basic_ingestion(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels)
        dset = load_idx_images(ipath, lpath, per_class=2, seed=3)
        assert dset.N == 6
        assert dset.d == 2
        for dist in dset:
            assert abs(dist.weights.sum() - 1.0) < 1e-12
            assert np.all(dist.support >= 0.0) and np.all(dist.support < 1.0)

    def test_gzip_transparent(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels, gz=True)
        assert load_idx_images(ipath, lpath, per_class=2, seed=3).N == 6

    def test_single_lit_pixel(self, tmp_path):
        images = np.zeros((2, 4, 4), dtype=np.uint8)
        images[0, 1, 2] = 17
        images[1, 0, 0] = 255
        ipath, lpath = self.make_files(tmp_path, images, np.array([0, 1]))
        dset = load_idx_images(ipath, lpath, per_class=1, seed=0)
        lone = next(d for d in dset if d.m == 1)
        assert lone.weights.tolist() == [1.0]

    def test_bad_magic(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels)
        ipath.write_bytes(b"\x00\x00\x08\x09" + ipath.read_bytes()[4:])
        with pytest.raises(BadMagicError):
            load_idx_images(ipath, lpath, per_class=1, seed=0)

    def test_truncated(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels)
        ipath.write_bytes(ipath.read_bytes()[:-5])
        with pytest.raises(TruncatedFileError):
            load_idx_images(ipath, lpath, per_class=1, seed=0)

    def test_label_count_mismatch(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels[:-1])
        with pytest.raises(LabelCountMismatchError):
            load_idx_images(ipath, lpath, per_class=1, seed=0)

    def test_per_class_exceeding_available(self, tmp_path, rng):
        images, labels = self.sample_images(rng)
        ipath, lpath = self.make_files(tmp_path, images, labels)
        with pytest.raises(ValueError, match="available"):
            load_idx_images(ipath, lpath, per_class=5, seed=0)

    def test_sampling_deterministic(self, tmp_path, rng):
        images, labels = self.sample_images(rng, count=12)
        ipath, lpath = self.make_files(tmp_path, images, labels)
        a = load_idx_images(ipath, lpath, per_class=2, seed=11)
        b = load_idx_images(ipath, lpath, per_class=2, seed=11)
        assert a.ids == b.ids


class TestNoise:
    def test_sigma_zero_is_identity(self, default_set):
        noisy = add_gaussian_noise(default_set, 0.0, seed=1)
        assert set_to_jsonl(noisy) == set_to_jsonl(default_set)

    def test_deterministic(self, default_set):
        a = add_gaussian_noise(default_set, 1.0, seed=5)
        b = add_gaussian_noise(default_set, 1.0, seed=5)
        assert set_to_jsonl(a) == set_to_jsonl(b)

    def test_shapes_and_weights_preserved(self, default_set):
        noisy = add_gaussian_noise(default_set, 3.0, seed=5)
        for a, b in zip(default_set, noisy):
            assert a.support.shape == b.support.shape
            assert np.array_equal(a.weights, b.weights)

    def test_negative_sigma(self, default_set):
        with pytest.raises(NegativeSigmaError):
            add_gaussian_noise(default_set, -0.1, seed=1)


class TestSubsample:
    def test_full_size_is_identity(self, default_set):
        sub = subsample_support(default_set, 40, seed=1)
        assert set_to_jsonl(sub) == set_to_jsonl(default_set)

    def test_smaller_counts_and_weights(self, default_set):
        sub = subsample_support(default_set, 7, seed=1)
        for dist in sub:
            assert dist.m == 7
            assert abs(dist.weights.sum() - 1.0) <= 1e-9

    def test_too_large_rejected(self, default_set):
        with pytest.raises(ValueError):
            subsample_support(default_set, 41, seed=1)
