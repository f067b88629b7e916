"""Uncentered spectral PCA of an image cube and fused-image reconstruction.

The band-unfolded cube X (pixels x bands) is factored as X = G U^T where U
holds the spectral singular vectors and G = X U the spatial loadings. U is
obtained from the q x q band Gram matrix X^T X, which keeps the eigenproblem
small no matter how many pixels the cube has. The unfolding is not
mean-centered.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cube import ImageCube, stack

__all__ = ["PcaModel", "pca_decompose", "reconstruct_full", "reconstruct_reduced"]

_SV_CLAMP = 1e-12  # singular values below this fraction of d[0] are treated as rank noise


@dataclass(frozen=True)
class PcaModel:
    """Spectral singular vectors ``u``, singular values ``d``, loadings ``G``.

    ``u`` is q x q orthonormal with one singular vector per column, ``d`` is
    sorted descending, and ``loadings`` is the m x n x q cube of G = X u.
    Sign convention: the largest-magnitude entry of every column of ``u`` is
    positive, which makes the decomposition deterministic.
    """

    u: np.ndarray
    d: np.ndarray
    loadings: ImageCube

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=np.float64)
        d = np.asarray(self.d, dtype=np.float64)
        u.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "d", d)

    @property
    def bands(self) -> int:
        return self.u.shape[0]


def pca_decompose(hs: ImageCube) -> PcaModel:
    """Decompose a cube into spectral singular vectors and spatial loadings."""
    if hs.bands < 1:
        raise ValueError("cube must have at least one band")
    x = hs.unfold()
    q = hs.bands
    if x.shape[0] < q:
        warnings.warn(
            f"cube has fewer pixels ({x.shape[0]}) than bands ({q}); "
            "the spectral basis is rank deficient",
            stacklevel=2,
        )
    gram = x.T @ x
    gram = (gram + gram.T) / 2.0
    eigvals, vecs = _jacobi_eigh(gram)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    vecs = vecs[:, order]
    flip = vecs[np.argmax(np.abs(vecs), axis=0), np.arange(q)] < 0.0
    vecs[:, flip] *= -1.0
    d = np.sqrt(np.clip(eigvals, 0.0, None))
    if d[0] > 0.0:
        d[d < _SV_CLAMP * d[0]] = 0.0
    loadings = ImageCube((x @ vecs).reshape(hs.rows, hs.cols, q))
    return PcaModel(u=vecs, d=d, loadings=loadings)


def reconstruct_full(
    loadings_hr_r: ImageCube, loadings_rest: ImageCube, model: PcaModel
) -> ImageCube:
    """Rebuild a full-band cube from sharpened plus remaining loadings."""
    q = model.bands
    if loadings_hr_r.bands + loadings_rest.bands != q:
        raise ValueError(
            f"loadings supply {loadings_hr_r.bands}+{loadings_rest.bands} bands, "
            f"model has {q}"
        )
    g = stack(loadings_hr_r, loadings_rest)
    return ImageCube((g.unfold() @ model.u.T).reshape(g.rows, g.cols, q))


def reconstruct_reduced(loadings_hr_r: ImageCube, model: PcaModel, r: int) -> ImageCube:
    """Rank-r spectral reconstruction from the first r loadings only."""
    q = model.bands
    if not 1 <= r <= q:
        raise ValueError(f"r must be in [1, {q}], got {r}")
    if loadings_hr_r.bands != r:
        raise ValueError(f"expected {r} loading bands, got {loadings_hr_r.bands}")
    g = loadings_hr_r.unfold()
    return ImageCube((g @ model.u[:, :r].T).reshape(loadings_hr_r.rows, loadings_hr_r.cols, q))


def _jacobi_eigh(sym: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol`` times the Frobenius norm of the input. Deterministic and
    adequate for the band counts this library handles (q <= 256).
    """
    n = sym.shape[0]
    a = sym.astype(np.float64, copy=True)
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    ref = float(np.linalg.norm(a))
    if ref == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        offs = a - np.diag(a.diagonal())
        if float(np.linalg.norm(offs)) <= tol * ref:
            return a.diagonal().copy(), v
        for p in range(n - 1):
            for q_ in range(p + 1, n):
                apq = a[p, q_]
                if abs(apq) <= 1e-18 * ref:
                    continue
                theta = (a[q_, q_] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q_].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q_] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q_, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q_, :] = s * row_p + c * row_q
                vec_p = v[:, p].copy()
                vec_q = v[:, q_].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q_] = s * vec_p + c * vec_q
    raise RuntimeError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
