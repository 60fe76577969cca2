import numpy as np
import pytest

from holopr.metrics import (
    GaussianStats,
    extract_features,
    frechet_distance,
    gaussian_stats,
    pooled_pixel_features,
    read_feature_csv,
    relative_mse,
    ssim,
    sym_psd_sqrt,
    write_feature_csv,
)


class TestRelativeMse:
    def test_exact_match(self):
        x = np.random.default_rng(0).random((4, 4))
        assert relative_mse(x, x) == 0.0

    def test_zero_reconstruction(self):
        x = np.random.default_rng(1).random((4, 4))
        assert relative_mse(np.zeros_like(x), x) == pytest.approx(1.0, rel=1e-15)

    def test_double_reconstruction(self):
        x = np.random.default_rng(2).random((4, 4))
        assert relative_mse(2 * x, x) == pytest.approx(1.0, rel=1e-15)

    def test_zero_truth_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            relative_mse(np.ones((2, 2)), np.zeros((2, 2)))


class TestSsim:
    def test_identical_images_score_one_exactly(self):
        x = np.random.default_rng(0).random((16, 16))
        assert ssim(x, x) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(3):
            a, b = rng.random((12, 15)), rng.random((12, 15))
            assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_constant_images_closed_form(self):
        c, delta = 0.25, 0.5
        a = np.full((16, 16), c)
        b = np.full((16, 16), c + delta)
        c1 = (0.01 * 1.0) ** 2
        luminance = (2 * c * (c + delta) + c1) / (c**2 + (c + delta) ** 2 + c1)
        assert ssim(a, b) == pytest.approx(luminance, rel=1e-12)

    def test_single_pixel_perturbation_drops_below_one(self):
        x = np.random.default_rng(3).random((16, 16))
        y = x.copy()
        y[8, 8] += 0.2
        assert ssim(x, y) < 1.0

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            value = ssim(rng.random((11, 11)), rng.random((11, 11)))
            assert -1.0 < value <= 1.0

    def test_small_images_rejected(self):
        with pytest.raises(ValueError, match="11x11"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_dynamic_range_scaling(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert ssim(255 * a, 255 * b, dynamic_range=255.0) == pytest.approx(
            ssim(a, b), rel=1e-9
        )


class TestFeatures:
    def test_constant_image(self):
        vec = pooled_pixel_features(np.full((32, 32), 0.7))
        np.testing.assert_allclose(vec[:64], 0.7, atol=1e-12)
        assert vec[64] == pytest.approx(0.7)
        assert vec[65] == pytest.approx(0.0, abs=1e-15)
        # powers of two sum exactly, so this constant gives literal zeros
        vec_half = pooled_pixel_features(np.full((32, 32), 0.5))
        assert vec_half[64] == 0.5 and vec_half[65] == 0.0

    def test_eight_by_eight_input_flattens_identically(self):
        x = np.random.default_rng(0).random((8, 8))
        vec = pooled_pixel_features(x)
        np.testing.assert_allclose(vec[:64], x.ravel(), atol=1e-12)

    def test_distinct_images_distinct_vectors(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert not np.array_equal(extract_features(a), extract_features(b))

    def test_custom_extractor(self):
        vec = extract_features(np.ones((4, 4)), extractor=lambda im: np.array([im.sum()]))
        np.testing.assert_array_equal(vec, [16.0])

    def test_dimension(self):
        assert extract_features(np.zeros((20, 30))).size == 66


class TestGaussianStats:
    def test_repeated_vector_gives_ridge_only(self):
        v = np.array([1.0, -2.0, 0.5])
        stats = gaussian_stats([v, v, v, v])
        np.testing.assert_array_equal(stats.mean, v)
        np.testing.assert_allclose(stats.cov, 0.0, atol=1e-20)

    def test_two_scalar_points_unbiased(self):
        stats = gaussian_stats(np.array([[0.0], [2.0]]))
        assert stats.mean[0] == 1.0
        # unbiased value 2 plus the documented 1e-10 * trace/F ridge
        assert stats.cov[0, 0] == pytest.approx(2.0, rel=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        rows = rng.random((6, 4))
        stats1 = gaussian_stats(rows)
        stats2 = gaussian_stats(rows[rng.permutation(6)])
        np.testing.assert_allclose(stats1.mean, stats2.mean, atol=1e-14)
        np.testing.assert_allclose(stats1.cov, stats2.cov, atol=1e-14)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(7)
        rows = rng.random((10, 5))
        stats = gaussian_stats(rows)
        mean = rows.mean(axis=0)
        cov = np.zeros((5, 5))
        for r in rows:
            d = r - mean
            for i in range(5):
                for j in range(5):
                    cov[i, j] += d[i] * d[j]
        cov /= 9
        np.testing.assert_allclose(stats.cov, cov, atol=1e-12)

    def test_single_vector_rejected(self):
        with pytest.raises(ValueError, match="two"):
            gaussian_stats(np.ones((1, 3)))


class TestPsdSqrt:
    def test_identity(self):
        np.testing.assert_allclose(sym_psd_sqrt(np.eye(3)), np.eye(3), atol=1e-14)

    def test_diagonal(self):
        np.testing.assert_allclose(
            sym_psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-12
        )

    def test_random_psd_reconstruction(self):
        rng = np.random.default_rng(0)
        b = rng.random((5, 5))
        a = b.T @ b
        root = sym_psd_sqrt(a)
        err = np.linalg.norm(root @ root - a) / np.linalg.norm(a)
        assert err <= 1e-8

    def test_clamping_keeps_trace(self):
        # tiny negative eigenvalues clamp to zero without inflating the trace
        m = np.diag([1.0, -5e-11])
        root = sym_psd_sqrt(m)
        assert np.trace(root @ root) <= 1.0 + 2 * 1e-10

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            sym_psd_sqrt(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="PSD"):
            sym_psd_sqrt(np.diag([1.0, -1.0]))


class TestFrechetDistance:
    def test_identical_stats_zero(self):
        rng = np.random.default_rng(0)
        stats = gaussian_stats(rng.random((8, 4)))
        assert frechet_distance(stats, stats) == 0.0

    def test_mean_shift_only(self):
        zero = np.zeros((3, 3))
        a = GaussianStats(mean=np.array([0.0, 0.0, 0.0]), cov=zero)
        b = GaussianStats(mean=np.array([1.0, 2.0, 2.0]), cov=zero)
        assert frechet_distance(a, b) == pytest.approx(9.0, abs=1e-12)

    def test_one_dimensional_analytic(self):
        a = GaussianStats(mean=np.array([0.0]), cov=np.array([[1.0]]))
        b = GaussianStats(mean=np.array([0.0]), cov=np.array([[4.0]]))
        assert frechet_distance(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        s1 = gaussian_stats(rng.random((10, 5)))
        s2 = gaussian_stats(rng.random((12, 5)))
        assert frechet_distance(s1, s2) == pytest.approx(frechet_distance(s2, s1), abs=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            s1 = gaussian_stats(rng.random((6, 3)))
            s2 = gaussian_stats(rng.random((6, 3)))
            assert frechet_distance(s1, s2) >= 0.0

    def test_dimension_mismatch_rejected(self):
        a = GaussianStats(mean=np.zeros(2), cov=np.eye(2))
        b = GaussianStats(mean=np.zeros(3), cov=np.eye(3))
        with pytest.raises(ValueError, match="dimension"):
            frechet_distance(a, b)


class TestFeatureCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        feats = rng.random((3, 5))
        ids = ["a", "b", "c"]
        path = tmp_path / "features.csv"
        write_feature_csv(ids, feats, path)
        header = path.read_text().splitlines()[0]
        assert header == "image_id,f0,f1,f2,f3,f4"
        loaded_ids, loaded = read_feature_csv(path)
        assert loaded_ids == ids
        np.testing.assert_array_equal(loaded, feats)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_feature_csv(path)
