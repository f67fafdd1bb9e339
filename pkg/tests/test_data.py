"""Dataset loaders, the binary record round trip, stratified
subsampling, and the texture generator's separation contract."""

import numpy as np
import pytest

from scnet import data, sampler
from scnet.errors import DataFormatError


def make_record(label, red=255, green=0, blue=0):
    rec = np.zeros(3073, dtype=np.uint8)
    rec[0] = label
    rec[1:1025] = red
    rec[1025:2049] = green
    rec[2049:] = blue
    return rec


class TestCifarLoader:
    def test_hand_crafted_record(self, tmp_path):
        path = tmp_path / "one.bin"
        make_record(3).tofile(path)
        ds = data.load_cifar10_binary(path)
        assert len(ds) == 1
        assert ds.labels[0] == 3
        means = ds.images[0].mean(axis=(1, 2))
        np.testing.assert_allclose(means, [1.0, 0.0, 0.0])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        ds = data.load_cifar10_binary(path)
        assert len(ds) == 0

    def test_record_count_follows_file_size(self, tmp_path):
        path = tmp_path / "batch.bin"
        rng = np.random.default_rng(0)
        n = 37
        recs = rng.integers(0, 256, size=(n, 3073), dtype=np.uint8)
        recs[:, 0] = rng.integers(0, 10, size=n)
        recs.tofile(path)
        assert path.stat().st_size == n * 3073
        assert len(data.load_cifar10_binary(path)) == n

    def test_bad_size_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(3072))
        with pytest.raises(DataFormatError, match="3073"):
            data.load_cifar10_binary(path)

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        make_record(11).tofile(path)
        with pytest.raises(DataFormatError, match="label"):
            data.load_cifar10_binary(path)

    def test_values_in_unit_interval(self, tmp_path):
        path = tmp_path / "batch.bin"
        rng = np.random.default_rng(1)
        recs = rng.integers(0, 256, size=(5, 3073), dtype=np.uint8)
        recs[:, 0] = 9
        recs.tofile(path)
        ds = data.load_cifar10_binary(path)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        recs = rng.integers(0, 256, size=(8, 3073), dtype=np.uint8)
        recs[:, 0] = rng.integers(0, 10, size=8)
        first = tmp_path / "a.bin"
        second = tmp_path / "b.bin"
        recs.tofile(first)
        ds = data.load_cifar10_binary(first)
        data.save_cifar10_binary(ds, second)
        assert first.read_bytes() == second.read_bytes()
        again = data.load_cifar10_binary(second)
        np.testing.assert_array_equal(ds.images, again.images)
        np.testing.assert_array_equal(ds.labels, again.labels)


class TestPpmDir:
    def test_round_trip_color_and_gray(self, tmp_path):
        for channels, sub in [(3, "rgb"), (1, "gray")]:
            ds = data.synth_clustered(3, 4, 12, seed=5, channels=channels)
            out = tmp_path / sub
            data.save_ppm_dir(ds, out)
            again = data.load_ppm_dir(out)
            assert len(again) == len(ds)
            np.testing.assert_array_equal(again.labels, ds.labels)
            # 8-bit quantization is the only loss
            assert np.abs(again.images - ds.images).max() <= 0.5 / 255 + 1e-7

    def test_name_convention_enforced(self, tmp_path):
        (tmp_path / "not-a-label.ppm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
        with pytest.raises(DataFormatError, match="label"):
            data.load_ppm_dir(tmp_path)

    def test_header_comments_ok(self, tmp_path):
        (tmp_path / "2_x.ppm").write_bytes(
            b"P6\n# a comment\n2 1\n255\n" + bytes(6))
        ds = data.load_ppm_dir(tmp_path)
        assert ds.images.shape == (1, 3, 1, 2)
        assert ds.labels[0] == 2

    def test_truncated_body_rejected(self, tmp_path):
        (tmp_path / "0_x.ppm").write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(DataFormatError, match="pixel bytes"):
            data.load_ppm_dir(tmp_path)


class TestSubsample:
    def setup_method(self):
        self.ds = data.synth_clustered(10, 30, 8, seed=7)

    def test_exact_per_class_histogram(self):
        sub = data.subsample_labeled(self.ds, 4, seed=0)
        assert len(sub) == 40
        hist = np.bincount(sub.labels, minlength=10)
        np.testing.assert_array_equal(hist, np.full(10, 4))

    def test_all_is_identity(self):
        sub = data.subsample_labeled(self.ds, 30, seed=0)
        np.testing.assert_array_equal(sub.images, self.ds.images)
        np.testing.assert_array_equal(sub.labels, self.ds.labels)

    def test_deterministic_per_seed(self):
        a = data.subsample_labeled(self.ds, 5, seed=3)
        b = data.subsample_labeled(self.ds, 5, seed=3)
        np.testing.assert_array_equal(a.images, b.images)
        c = data.subsample_labeled(self.ds, 5, seed=4)
        assert not np.array_equal(a.images, c.images)

    def test_too_few_examples(self):
        with pytest.raises(DataFormatError, match="class"):
            data.subsample_labeled(self.ds, 31, seed=0)


class TestSynthClustered:
    def test_deterministic(self):
        a = data.synth_clustered(4, 6, 16, seed=11)
        b = data.synth_clustered(4, 6, 16, seed=11)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_empty(self):
        ds = data.synth_clustered(4, 0, 16, seed=0)
        assert len(ds) == 0

    def test_values_in_unit_interval(self):
        ds = data.synth_clustered(5, 10, 24, seed=1)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_within_image_beats_cross_class_correlation(self):
        """Patch pairs drawn by the sampler itself: same-image pairs must
        correlate more strongly than cross-class pairs on average."""
        ds = data.synth_clustered(10, 20, 32, seed=13)
        rng = np.random.default_rng(14)
        p = 16
        within, across = [], []
        for _ in range(1000):
            i = int(rng.integers(len(ds)))
            pair = sampler.sample_pair(ds.images[i], p, rng)
            within.append(np.corrcoef(pair.anchor.ravel(),
                                      pair.positive.ravel())[0, 1])
            others = np.flatnonzero(ds.labels != ds.labels[i])
            j = int(rng.choice(others))
            other = sampler.sample_pair(ds.images[j], p, rng)
            across.append(np.corrcoef(pair.anchor.ravel(),
                                      other.anchor.ravel())[0, 1])
        assert np.mean(within) > np.mean(across)
