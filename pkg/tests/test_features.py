import numpy as np
import pytest

from drivelabel.errors import (
    BadHeaderError,
    BadMagicError,
    BadVersionError,
    DegenerateFrameError,
    DimensionMismatchError,
    EmptySampleError,
    NonFiniteValuesError,
    TrailingDataError,
    TruncatedFileError,
    ZeroNormError,
)
from drivelabel.features import (
    FeatureGrid,
    SimilarityMap,
    cosine_similarity,
    load_feature_grid,
    mean_feature,
    normalize_map,
    save_feature_grid,
    similarity_map,
)

# hand arithmetic: 32 / (sqrt(14) * sqrt(77))
COS_123_456 = 0.9746318461970762


def random_grid(rng, rows=46, cols=46, dim=1536):
    return FeatureGrid(values=rng.standard_normal((rows, cols, dim)).astype(np.float32))


class TestFeatureFile:
    def test_roundtrip_bit_identical(self, tmp_path, rng):
        grid = random_grid(rng)
        path = tmp_path / "grid.tdfg"
        save_feature_grid(path, grid)
        loaded = load_feature_grid(path)
        assert loaded.values.tobytes() == grid.values.tobytes()
        assert (loaded.rows, loaded.cols, loaded.dim) == (46, 46, 1536)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tdfg"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(BadMagicError):
            load_feature_grid(path)

    def test_truncated_payload(self, tmp_path, rng):
        grid = random_grid(rng, rows=4, cols=4, dim=8)
        path = tmp_path / "grid.tdfg"
        save_feature_grid(path, grid)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(TruncatedFileError):
            load_feature_grid(path)

    def test_trailing_data(self, tmp_path, rng):
        grid = random_grid(rng, rows=4, cols=4, dim=8)
        path = tmp_path / "grid.tdfg"
        save_feature_grid(path, grid)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(TrailingDataError):
            load_feature_grid(path)

    def test_bad_version(self, tmp_path, rng):
        grid = random_grid(rng, rows=4, cols=4, dim=8)
        path = tmp_path / "grid.tdfg"
        save_feature_grid(path, grid)
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(BadVersionError):
            load_feature_grid(path)

    def test_zero_dim_header(self, tmp_path):
        import struct

        path = tmp_path / "grid.tdfg"
        path.write_bytes(b"TDFG" + struct.pack("<IIII", 1, 0, 4, 8))
        with pytest.raises(BadHeaderError):
            load_feature_grid(path)

    def test_non_finite_payload(self, tmp_path):
        import struct

        path = tmp_path / "grid.tdfg"
        vals = np.full(4 * 4 * 2, np.nan, dtype="<f4")
        path.write_bytes(b"TDFG" + struct.pack("<IIII", 1, 4, 4, 2) + vals.tobytes())
        with pytest.raises(NonFiniteValuesError):
            load_feature_grid(path)


class TestMeanFeature:
    def test_single_patch(self, rng):
        grid = random_grid(rng, 4, 4, 16)
        sample = np.zeros((4, 4), dtype=bool)
        sample[2, 3] = True
        out = mean_feature(grid, sample)
        assert np.allclose(out, grid.values[2, 3].astype(np.float64))

    def test_opposite_vectors_cancel(self):
        v = np.ones(8, dtype=np.float32)
        values = np.stack([v, -v]).reshape(2, 1, 8)
        grid = FeatureGrid(values=values)
        out = mean_feature(grid, np.ones((2, 1), dtype=bool))
        assert np.allclose(out, 0.0)

    def test_matches_scalar_loop_oracle(self, rng):
        grid = random_grid(rng, 6, 5, 32)
        sample = rng.random((6, 5)) > 0.4
        sample[0, 0] = True
        out = mean_feature(grid, sample)
        acc = np.zeros(32)
        n = 0
        for r in range(6):
            for c in range(5):
                if sample[r, c]:
                    acc += grid.values[r, c].astype(np.float64)
                    n += 1
        assert np.allclose(out, acc / n, rtol=1e-6)

    def test_full_mask_is_grand_mean(self, rng):
        grid = random_grid(rng, 4, 4, 8)
        out = mean_feature(grid, np.ones((4, 4), dtype=bool))
        assert np.allclose(out, grid.values.reshape(-1, 8).astype(np.float64).mean(axis=0))

    def test_empty_sample(self, rng):
        grid = random_grid(rng, 4, 4, 8)
        with pytest.raises(EmptySampleError):
            mean_feature(grid, np.zeros((4, 4), dtype=bool))

    def test_dim_mismatch(self, rng):
        grid = random_grid(rng, 4, 4, 8)
        with pytest.raises(DimensionMismatchError):
            mean_feature(grid, np.zeros((5, 4), dtype=bool))


class TestCosineSimilarity:
    def test_self_similarity(self):
        assert cosine_similarity([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_hand_value(self):
        assert cosine_similarity([1, 2, 3], [4, 5, 6]) == pytest.approx(COS_123_456, abs=1e-12)

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self, rng):
        for _ in range(20):
            a = rng.standard_normal(16)
            b = rng.standard_normal(16)
            alpha, beta = rng.uniform(0.1, 100, 2)
            assert cosine_similarity(alpha * a, beta * b) == pytest.approx(
                cosine_similarity(a, b), abs=1e-9
            )

    def test_range(self, rng):
        for _ in range(100):
            v = cosine_similarity(rng.standard_normal(8), rng.standard_normal(8))
            assert -1.0 - 1e-7 <= v <= 1.0 + 1e-7


class TestSimilarityMap:
    def test_all_equal_mean(self):
        v = np.ones((3, 3, 4), dtype=np.float32)
        out = similarity_map(FeatureGrid(values=v), np.ones(4))
        assert np.allclose(out.values, 1.0)
        assert not out.normalized

    def test_plus_minus_mean(self):
        mean = np.array([1.0, 2.0, 0.0, -1.0])
        values = np.stack([mean, -mean]).reshape(2, 1, 4).astype(np.float32)
        out = similarity_map(FeatureGrid(values=values), mean)
        assert out.values[0, 0] == pytest.approx(1.0)
        assert out.values[1, 0] == pytest.approx(-1.0)

    def test_zero_norm_patch_counted(self):
        values = np.zeros((2, 1, 4), dtype=np.float32)
        values[0, 0] = [1, 0, 0, 0]
        out = similarity_map(FeatureGrid(values=values), np.array([1.0, 0, 0, 0]))
        assert out.values[1, 0] == -1.0
        assert out.zero_norm_patches == 1

    def test_zero_norm_mean_rejected(self, rng):
        with pytest.raises(ZeroNormError):
            similarity_map(random_grid(rng, 2, 2, 4), np.zeros(4))

    def test_two_cluster_separation(self):
        """At 4-sigma separation every patch is closer to its own cluster mean."""
        from drivelabel.synth import FeatureModel, SceneSpec, _fold_noise, OFFROAD, ROAD_EGO

        spec = SceneSpec(seed=5, feature_seed=5, separation=4.0)
        model = FeatureModel(spec)
        mu_road = model.mode(ROAD_EGO)
        mu_off = model.mode(OFFROAD)
        rng = np.random.default_rng(0)
        for mean, other in ((mu_road, mu_off), (mu_off, mu_road)):
            eps = _fold_noise(rng.standard_normal((1058, spec.feature_dim)), mean, other)
            pts = mean + eps
            own = pts @ (mean / np.linalg.norm(mean))
            cross = pts @ (other / np.linalg.norm(other))
            assert (own > cross).all()

    def test_argmax_preserved_by_normalization(self, rng):
        grid = random_grid(rng, 5, 5, 16)
        mean = rng.standard_normal(16)
        raw = similarity_map(grid, mean)
        normed = normalize_map(raw)
        assert np.argmax(raw.values) == np.argmax(normed.values)


class TestNormalizeMap:
    def test_divides_by_max(self):
        smap = SimilarityMap(values=np.array([[0.8, 0.4]]))
        out = normalize_map(smap)
        assert out.values[0, 1] == pytest.approx(0.5)
        assert out.values[0, 0] == pytest.approx(1.0)
        assert out.normalized

    def test_all_equal_positive(self):
        out = normalize_map(SimilarityMap(values=np.full((2, 2), 0.3)))
        assert np.allclose(out.values, 1.0)

    def test_negative_clamped_to_zero(self):
        out = normalize_map(SimilarityMap(values=np.array([[0.8, -0.2]])))
        # raw division would give -0.25; likelihoods clamp at zero
        assert out.values[0, 1] == 0.0

    def test_idempotent_with_flag(self):
        smap = normalize_map(SimilarityMap(values=np.array([[0.8, 0.4]])))
        again = normalize_map(smap)
        assert again is smap

    def test_degenerate_frame(self):
        with pytest.raises(DegenerateFrameError):
            normalize_map(SimilarityMap(values=np.full((2, 2), 1e-9)))

    def test_order_preserving(self, rng):
        vals = rng.uniform(0.01, 0.9, (4, 4))
        out = normalize_map(SimilarityMap(values=vals))
        assert (np.argsort(vals.ravel()) == np.argsort(out.values.ravel())).all()

    def test_max_is_one(self, rng):
        out = normalize_map(SimilarityMap(values=rng.uniform(0.1, 0.7, (4, 4))))
        assert out.values.max() == pytest.approx(1.0)
        assert out.values.min() >= 0.0
