import numpy as np
import pytest

from hsfuse.cube import ImageCube
from hsfuse.resample import decimate
from hsfuse.simulate import SpectralResponse, add_noise, make_wald_pair, simulate_ms


def rand_cube(seed, rows=8, cols=8, bands=5):
    return ImageCube(np.random.default_rng(seed).normal(size=(rows, cols, bands)) + 2.0)


class TestSpectralResponse:
    def test_rows_normalized(self):
        r = SpectralResponse(np.array([[2.0, 2.0], [1.0, 3.0]]))
        np.testing.assert_allclose(r.weights.sum(axis=1), [1.0, 1.0])

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            SpectralResponse(np.array([[1.0, -0.5]]))

    def test_rejects_zero_row(self):
        with pytest.raises(ValueError, match="positive weight"):
            SpectralResponse(np.array([[1.0, 1.0], [0.0, 0.0]]))

    def test_from_csv(self, tmp_path):
        path = tmp_path / "resp.csv"
        path.write_text(
            "# response rows\n"
            "\n"
            "1, 1, 0, 0\n"
            "0, 0, 2, 2  # trailing comment\n"
        )
        r = SpectralResponse.from_csv(path)
        assert r.weights.shape == (2, 4)
        np.testing.assert_allclose(r.weights[0], [0.5, 0.5, 0, 0])
        np.testing.assert_allclose(r.weights[1], [0, 0, 0.5, 0.5])

    def test_from_csv_ragged_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n1,2\n")
        with pytest.raises(ValueError, match="inconsistent"):
            SpectralResponse.from_csv(path)

    def test_from_csv_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,x,3\n")
        with pytest.raises(ValueError, match="malformed"):
            SpectralResponse.from_csv(path)

    def test_block_average_partition(self):
        r = SpectralResponse.block_average(3, 7)
        assert r.weights.shape == (3, 7)
        # every input band contributes to exactly one output band
        np.testing.assert_allclose((r.weights > 0).sum(axis=0), np.ones(7))

    def test_rgbn_shape_and_rows(self):
        r = SpectralResponse.rgbn(102)
        assert r.weights.shape == (4, 102)
        assert np.all(r.weights.sum(axis=1) > 0.999)

    def test_rgbn_coarse_grid_fallback(self):
        r = SpectralResponse.rgbn(4)
        assert r.weights.shape == (4, 4)
        np.testing.assert_allclose(r.weights.sum(axis=1), np.ones(4))


class TestSimulateMs:
    def test_one_hot_rows_select_bands(self):
        cube = rand_cube(0)
        w = np.zeros((2, 5))
        w[0, 3] = 1.0
        w[1, 1] = 1.0
        out = simulate_ms(cube, SpectralResponse(w))
        np.testing.assert_array_equal(out.data[:, :, 0], cube.data[:, :, 3])
        np.testing.assert_array_equal(out.data[:, :, 1], cube.data[:, :, 1])

    def test_uniform_row_preserves_constant(self):
        cube = ImageCube(np.full((4, 4, 5), 7.0))
        out = simulate_ms(cube, SpectralResponse(np.ones((1, 5))))
        np.testing.assert_allclose(out.data, 7.0)

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(1)
        cube = ImageCube(rng.normal(size=(3, 3, 5)))
        w = rng.uniform(0.1, 1.0, size=(2, 5))
        response = SpectralResponse(w)
        out = simulate_ms(cube, response)
        for i in range(3):
            for j in range(3):
                for p in range(2):
                    expected = float(np.dot(response.weights[p], cube.data[i, j]))
                    assert out.data[i, j, p] == pytest.approx(expected, abs=1e-12)

    def test_column_mismatch(self):
        with pytest.raises(ValueError, match="columns"):
            simulate_ms(rand_cube(2, bands=4), SpectralResponse(np.ones((2, 5))))

    def test_commutes_with_decimation(self):
        cube = rand_cube(3, rows=8, cols=8, bands=6)
        response = SpectralResponse(np.random.default_rng(4).uniform(0.1, 1, (2, 6)))
        a = decimate(simulate_ms(cube, response), 2, "bicubic")
        b = simulate_ms(decimate(cube, 2, "bicubic"), response)
        np.testing.assert_allclose(a.data, b.data, atol=1e-10)


class TestWaldPair:
    def test_shapes(self):
        ref = rand_cube(5, rows=8, cols=12, bands=6)
        response = SpectralResponse.block_average(3, 6)
        ms, lr = make_wald_pair(ref, response, 4, "bicubic")
        assert ms.shape == (8, 12, 3)
        assert lr.shape == (2, 3, 6)

    def test_factor_one_returns_reference(self):
        ref = rand_cube(6)
        _, lr = make_wald_pair(ref, SpectralResponse.block_average(2, 5), 1, "bicubic")
        np.testing.assert_array_equal(lr.data, ref.data)

    def test_constant_reference(self):
        ref = ImageCube(np.full((8, 8, 4), 3.0))
        ms, lr = make_wald_pair(ref, SpectralResponse.block_average(2, 4), 4, "bilinear")
        np.testing.assert_allclose(ms.data, 3.0)
        np.testing.assert_allclose(lr.data, 3.0)

    def test_divisibility_enforced(self):
        ref = rand_cube(7, rows=9, cols=8, bands=4)
        with pytest.raises(ValueError, match="divisible"):
            make_wald_pair(ref, SpectralResponse.block_average(2, 4), 4, "bicubic")


class TestAddNoise:
    def test_realized_snr(self):
        cube = ImageCube(np.random.default_rng(8).normal(size=(128, 120, 102)) + 3.0)
        noisy = add_noise(cube, 20.0, np.random.default_rng(9))
        noise = noisy.data - cube.data
        realized = 10.0 * np.log10(np.mean(cube.data**2) / np.mean(noise**2))
        assert realized == pytest.approx(20.0, abs=0.1)

    def test_infinite_snr_identity(self):
        cube = rand_cube(10)
        out = add_noise(cube, np.inf, np.random.default_rng(11))
        np.testing.assert_array_equal(out.data, cube.data)

    def test_same_seed_reproducible(self):
        cube = rand_cube(12)
        a = add_noise(cube, 15.0, np.random.default_rng(13))
        b = add_noise(cube, 15.0, np.random.default_rng(13))
        np.testing.assert_array_equal(a.data, b.data)

    def test_all_zero_cube_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            add_noise(ImageCube(np.zeros((4, 4, 2))), 20.0, np.random.default_rng(14))

    def test_nan_snr_rejected(self):
        with pytest.raises(ValueError, match="SNR"):
            add_noise(rand_cube(15), float("nan"), np.random.default_rng(16))
