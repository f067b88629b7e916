"""Fusion quality metrics: ERGAS, SAM and SSIM.

ERGAS and SSIM treat their first argument as the reference (band means and
dynamic range are taken from it); SAM is symmetric. SSIM follows the usual
definition: 11x11 Gaussian window with sigma 1.5, stabilizers (0.01 L)^2 and
(0.03 L)^2 with L the reference dynamic range taken globally over the cube,
band-averaged mean map value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import ImageCube

__all__ = ["MetricsReport", "ergas", "sam", "ssim", "evaluate_pair"]

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class MetricsReport:
    """One (reference, estimate) comparison."""

    ergas: float
    sam_deg: float
    ssim: float
    sam_skipped: int = 0
    per_band: tuple[tuple[int, float, float], ...] | None = None  # (band, rmse, ssim)


def ergas(ref: ImageCube, est: ImageCube, ratio: float) -> float:
    """Relative dimensionless global error: 100*ratio*sqrt(mean_k RMSE_k^2/mu_k^2)."""
    _check_dims(ref, est)
    if ratio <= 0.0:
        raise ValueError(f"resolution ratio must be positive, got {ratio}")
    mu = ref.data.mean(axis=(0, 1))
    if np.any(np.abs(mu) < 1e-12):
        raise ValueError("a reference band mean is too close to zero for ERGAS")
    rmse = _band_rmse(ref, est)
    return float(100.0 * ratio * np.sqrt(np.mean((rmse / mu) ** 2)))


def sam(ref: ImageCube, est: ImageCube) -> float:
    """Mean per-pixel spectral angle in degrees; zero-norm pixels are skipped."""
    return _sam_stats(ref, est)[0]


def ssim(ref: ImageCube, est: ImageCube) -> float:
    """Band-averaged structural similarity."""
    return float(np.mean(_ssim_bands(ref, est)))


def evaluate_pair(ref: ImageCube, est: ImageCube, ratio: float) -> MetricsReport:
    """All three metrics plus the per-band RMSE/SSIM table."""
    e = ergas(ref, est, ratio)
    s, skipped = _sam_stats(ref, est)
    ssim_bands = _ssim_bands(ref, est)
    rmse = _band_rmse(ref, est)
    per_band = tuple(
        (k, float(rmse[k]), float(ssim_bands[k])) for k in range(ref.bands)
    )
    return MetricsReport(
        ergas=e,
        sam_deg=s,
        ssim=float(np.mean(ssim_bands)),
        sam_skipped=skipped,
        per_band=per_band,
    )


def _check_dims(ref: ImageCube, est: ImageCube) -> None:
    if ref.shape != est.shape:
        raise ValueError(f"cube dimensions differ: {ref.shape} vs {est.shape}")


def _band_rmse(ref: ImageCube, est: ImageCube) -> np.ndarray:
    diff = ref.data - est.data
    return np.sqrt(np.mean(diff * diff, axis=(0, 1)))


def _sam_stats(ref: ImageCube, est: ImageCube) -> tuple[float, int]:
    _check_dims(ref, est)
    if ref.bands < 1:
        raise ValueError("SAM needs at least one band")
    a = ref.unfold()
    b = est.unfold()
    na2 = np.einsum("ij,ij->i", a, a)
    nb2 = np.einsum("ij,ij->i", b, b)
    dot = np.einsum("ij,ij->i", a, b)
    valid = (na2 > 0.0) & (nb2 > 0.0)
    skipped = int(np.count_nonzero(~valid))
    if skipped == valid.size:
        raise ValueError("all pixels have zero-norm spectra")
    cos = np.clip(dot[valid] / np.sqrt(na2[valid] * nb2[valid]), -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    # identical spectra are exactly parallel; bypass arccos rounding
    angles[np.all(a == b, axis=1)[valid]] = 0.0
    return float(angles.mean()), skipped


def _ssim_bands(ref: ImageCube, est: ImageCube) -> np.ndarray:
    _check_dims(ref, est)
    if ref.rows < _SSIM_WINDOW or ref.cols < _SSIM_WINDOW:
        raise ValueError(
            f"image smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    span = float(ref.data.max() - ref.data.min())
    if span == 0.0:
        span = 1.0  # flat reference: keep the stabilizers positive
    c1 = (0.01 * span) ** 2
    c2 = (0.03 * span) ** 2
    offsets = np.arange(_SSIM_WINDOW, dtype=np.float64) - (_SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * _SSIM_SIGMA**2))
    g /= g.sum()
    return np.array(
        [
            _ssim_one(ref.data[:, :, k], est.data[:, :, k], g, c1, c2)
            for k in range(ref.bands)
        ]
    )


def _ssim_one(x: np.ndarray, y: np.ndarray, g: np.ndarray, c1: float, c2: float) -> float:
    mx = _filter_valid(x, g)
    my = _filter_valid(y, g)
    vx = _filter_valid(x * x, g) - mx * mx
    vy = _filter_valid(y * y, g) - my * my
    cxy = _filter_valid(x * y, g) - mx * my
    smap = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / (
        (mx * mx + my * my + c1) * (vx + vy + c2)
    )
    return float(smap.mean())


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with the 1-D window ``g``."""
    n = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, n, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, n, axis=1) @ g
