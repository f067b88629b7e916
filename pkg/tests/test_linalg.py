import numpy as np
import pytest

from hsfuse.cube import ImageCube, slice_bands
from hsfuse.linalg import PcaModel, pca_decompose, reconstruct_full, reconstruct_reduced

import oracles


def rand_cube(rng, rows, cols, bands):
    return ImageCube(rng.normal(size=(rows, cols, bands)))


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestPcaDecompose:
    def test_rank_one_spectrum(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(5, 4))
        data = np.stack([c * base for c in (1.0, -2.0, 0.5)], axis=2)
        model = pca_decompose(ImageCube(data))
        assert model.d[0] > 0
        assert np.all(model.d[1:] <= 1e-10 * model.d[0])

    def test_reconstruction_oracle(self):
        rng = np.random.default_rng(1)
        cube = rand_cube(rng, 6, 5, 4)
        model = pca_decompose(cube)
        recon = model.loadings.unfold() @ model.u.T
        assert rel_fro(recon, cube.unfold()) < 1e-8

    def test_orthonormal_u(self):
        model = pca_decompose(rand_cube(np.random.default_rng(2), 7, 6, 5))
        err = np.abs(model.u.T @ model.u - np.eye(5)).max()
        assert err < 1e-10

    def test_gram_eigenvalues_vs_greedy_jacobi(self):
        cube = rand_cube(np.random.default_rng(3), 5, 5, 3)
        model = pca_decompose(cube)
        x = cube.unfold()
        expected = oracles.greedy_jacobi_eigvalsh(x.T @ x)
        np.testing.assert_allclose(model.d**2, expected, rtol=1e-8)

    def test_gram_eigenvalues_vs_lapack(self):
        cube = rand_cube(np.random.default_rng(4), 8, 7, 6)
        model = pca_decompose(cube)
        x = cube.unfold()
        expected = np.sort(np.linalg.eigvalsh(x.T @ x))[::-1]
        np.testing.assert_allclose(model.d**2, expected, rtol=1e-8)

    def test_singular_values_descending_nonnegative(self):
        model = pca_decompose(rand_cube(np.random.default_rng(5), 6, 6, 4))
        assert np.all(model.d >= 0)
        assert np.all(np.diff(model.d) <= 0)

    def test_sign_convention(self):
        model = pca_decompose(rand_cube(np.random.default_rng(6), 6, 6, 4))
        for k in range(4):
            col = model.u[:, k]
            assert col[np.argmax(np.abs(col))] > 0

    def test_deterministic(self):
        cube = rand_cube(np.random.default_rng(7), 6, 6, 5)
        a = pca_decompose(cube)
        b = pca_decompose(cube)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.d, b.d)
        np.testing.assert_array_equal(a.loadings.data, b.loadings.data)

    def test_energy_identity(self):
        cube = rand_cube(np.random.default_rng(8), 6, 5, 4)
        model = pca_decompose(cube)
        total = np.linalg.norm(cube.unfold()) ** 2
        assert np.sum(model.d**2) == pytest.approx(total, rel=1e-8)

    def test_warns_when_fewer_pixels_than_bands(self):
        with pytest.warns(UserWarning, match="fewer pixels"):
            pca_decompose(rand_cube(np.random.default_rng(9), 2, 2, 5))

    def test_rejects_zero_bands(self):
        with pytest.raises(ValueError, match="band"):
            pca_decompose(ImageCube(np.zeros((3, 3, 0))))

    def test_eckart_young_spot_check(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            cube = rand_cube(rng, 4, 4, 3)
            model = pca_decompose(cube)
            x = cube.unfold()
            best = np.linalg.norm(
                reconstruct_reduced(slice_bands(model.loadings, 0, 1), model, 1).unfold() - x
            )
            for _ in range(200):
                u = rng.normal(size=3)
                u /= np.linalg.norm(u)
                load = x @ u
                rank1 = np.outer(load, u)
                assert best <= np.linalg.norm(rank1 - x) + 1e-9


class TestReconstruct:
    def test_full_round_trip(self):
        cube = rand_cube(np.random.default_rng(11), 5, 4, 6)
        model = pca_decompose(cube)
        r = 2
        out = reconstruct_full(
            slice_bands(model.loadings, 0, r),
            slice_bands(model.loadings, r, cube.bands - r),
            model,
        )
        assert rel_fro(out.data, cube.data) < 1e-8

    def test_full_degenerate_split(self):
        cube = rand_cube(np.random.default_rng(12), 4, 4, 3)
        model = pca_decompose(cube)
        empty = ImageCube(np.zeros((4, 4, 0)))
        out = reconstruct_full(model.loadings, empty, model)
        expected = model.loadings.unfold() @ model.u.T
        np.testing.assert_allclose(out.unfold(), expected, atol=1e-12)

    def test_full_identity_u(self):
        rng = np.random.default_rng(13)
        loadings = rand_cube(rng, 2, 2, 3)
        model = PcaModel(u=np.eye(3), d=np.ones(3), loadings=loadings)
        out = reconstruct_full(loadings, ImageCube(np.zeros((2, 2, 0))), model)
        np.testing.assert_array_equal(out.data, loadings.data)

    def test_full_band_count_mismatch(self):
        cube = rand_cube(np.random.default_rng(14), 4, 4, 4)
        model = pca_decompose(cube)
        with pytest.raises(ValueError, match="bands"):
            reconstruct_full(
                slice_bands(model.loadings, 0, 1),
                slice_bands(model.loadings, 1, 2),
                model,
            )

    def test_reduced_full_rank(self):
        cube = rand_cube(np.random.default_rng(15), 5, 5, 4)
        model = pca_decompose(cube)
        out = reconstruct_reduced(model.loadings, model, 4)
        assert rel_fro(out.data, cube.data) < 1e-8

    def test_reduced_exact_low_rank(self):
        rng = np.random.default_rng(16)
        spatial = rng.normal(size=(6, 5, 2))
        spectra = rng.normal(size=(2, 4))
        cube = ImageCube(np.tensordot(spatial, spectra, axes=([2], [0])))
        model = pca_decompose(cube)
        out = reconstruct_reduced(slice_bands(model.loadings, 0, 2), model, 2)
        assert rel_fro(out.data, cube.data) < 1e-8

    def test_reduced_denoises_low_rank_data(self):
        rng = np.random.default_rng(17)
        spatial = rng.normal(size=(8, 8, 2))
        spectra = rng.normal(size=(2, 5))
        clean = np.tensordot(spatial, spectra, axes=([2], [0]))
        noisy = clean + 0.05 * rng.normal(size=clean.shape)
        model = pca_decompose(ImageCube(noisy))
        out = reconstruct_reduced(slice_bands(model.loadings, 0, 2), model, 2)
        err_reduced = np.linalg.norm(out.data - clean)
        err_noisy = np.linalg.norm(noisy - clean)
        assert err_reduced < err_noisy
        # brute-force projection oracle: projecting onto the top-2 spectral
        # subspace is what reconstruct_reduced must compute
        proj = noisy.reshape(-1, 5) @ model.u[:, :2] @ model.u[:, :2].T
        np.testing.assert_allclose(out.unfold(), proj, atol=1e-10)

    def test_reduced_r_out_of_range(self):
        cube = rand_cube(np.random.default_rng(18), 4, 4, 3)
        model = pca_decompose(cube)
        with pytest.raises(ValueError, match="r must be"):
            reconstruct_reduced(model.loadings, model, 5)
