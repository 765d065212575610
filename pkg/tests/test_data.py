import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refine_al import (
    DataError,
    FormatError,
    PoolState,
    SyntheticSpec,
    load_embeddings,
    load_labels,
    normalize_features,
    save_embeddings,
    save_labels,
    synth_gaussian,
)


class TestBinaryFormats:
    def test_refb_readback(self, tmp_path):
        m = np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32)
        path = tmp_path / "e.refb"
        save_embeddings(path, m)
        out = load_embeddings(path)
        assert out.shape == (2, 3)
        np.testing.assert_array_equal(out, m)

    def test_refb_roundtrip_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((100, 8)).astype(np.float32)
        p1, p2 = tmp_path / "a.refb", tmp_path / "b.refb"
        save_embeddings(p1, m)
        save_embeddings(p2, load_embeddings(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_payload(self, tmp_path):
        m = np.zeros((10, 4), dtype=np.float32)
        path = tmp_path / "e.refb"
        save_embeddings(path, m)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 4 * 4])  # drop one row
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_bad_magic_falls_back_to_csv_then_fails(self, tmp_path):
        path = tmp_path / "e.refb"
        path.write_bytes(b"XXXXgarbage")
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_nan_payload_rejected(self, tmp_path):
        m = np.zeros((2, 2), dtype=np.float32)
        path = tmp_path / "e.refb"
        save_embeddings(path, m)
        blob = bytearray(path.read_bytes())
        blob[-4:] = np.float32("nan").tobytes()
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError):
            load_embeddings(path)

    def test_refl_roundtrip(self, tmp_path):
        y = np.array([0, 2, 1, 1], dtype=np.int64)
        path = tmp_path / "l.refl"
        save_labels(path, y, 3)
        np.testing.assert_array_equal(load_labels(path, 3), y)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
    def test_refb_roundtrip_property(self, n, d, seed):
        m = np.random.default_rng(seed).standard_normal((n, d)).astype(np.float32)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "m.refb"
            save_embeddings(path, m)
            np.testing.assert_array_equal(load_embeddings(path), m)


class TestCsvFallbacks:
    def test_labels_with_header(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("label\n0\n2\n1\n")
        np.testing.assert_array_equal(load_labels(path, 3), [0, 2, 1])

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("0\n5\n1\n")
        with pytest.raises(DataError):
            load_labels(path, 3)

    def test_empty_labels(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("")
        with pytest.raises(DataError):
            load_labels(path, 3)

    def test_embeddings_csv(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("1.0,2.0\n3.0,4.0\n")
        np.testing.assert_allclose(load_embeddings(path), [[1, 2], [3, 4]])


class TestNormalize:
    def test_three_four_five(self):
        out = normalize_features(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-7)

    def test_idempotent_on_unit_rows(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((20, 5))
        once = normalize_features(m)
        twice = normalize_features(once)
        np.testing.assert_allclose(once, twice, atol=1e-6)
        np.testing.assert_allclose(np.linalg.norm(twice, axis=1), 1.0, atol=1e-6)

    def test_zero_row_rejected(self):
        with pytest.raises(DataError):
            normalize_features(np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_direction_preserved(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((30, 4))
        out = normalize_features(m)
        cos = np.einsum("ij,ij->i", m, out) / np.linalg.norm(m, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-6)


class TestSynthetic:
    def test_determinism(self):
        spec = SyntheticSpec(n_per_class=10, n_classes=3, n_dims=4, seed=7)
        x1, y1 = synth_gaussian(spec)
        x2, y2 = synth_gaussian(spec)
        assert x1.tobytes() == x2.tobytes()
        np.testing.assert_array_equal(y1, y2)

    def test_class_counts(self):
        x, y = synth_gaussian(SyntheticSpec(n_per_class=50, n_classes=4, n_dims=3, seed=0))
        assert x.shape == (200, 3)
        np.testing.assert_array_equal(np.bincount(y), [50] * 4)

    def test_tight_blobs_centroid_separable(self):
        # independent oracle: classify by nearest class centroid
        spec = SyntheticSpec(n_per_class=40, n_classes=4, n_dims=6,
                             cluster_spread=0.01, center_scale=10, seed=3)
        x, y = synth_gaussian(spec)
        centroids = np.stack([x[y == c].mean(axis=0) for c in range(4)])
        pred = np.argmin(
            ((x[:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
        assert np.mean(pred == y) == 1.0

    def test_invalid_spec(self):
        with pytest.raises(DataError):
            SyntheticSpec(n_per_class=0, n_classes=2, n_dims=2)
        with pytest.raises(DataError):
            SyntheticSpec(n_per_class=1, n_classes=2, n_dims=2, cluster_spread=0)


class TestPoolState:
    def test_disjointness_enforced(self):
        with pytest.raises(DataError):
            PoolState(labeled=[0, 1], unlabeled=[1, 2])

    def test_sorted_views(self):
        ps = PoolState(labeled=[3, 1], unlabeled=[5, 4])
        np.testing.assert_array_equal(ps.labeled, [1, 3])
        np.testing.assert_array_equal(ps.unlabeled, [4, 5])
