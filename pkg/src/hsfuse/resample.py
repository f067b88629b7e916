"""Band-wise spatial resampling with bicubic, bilinear and nearest kernels.

Both directions share the pixel-center phase convention: output index t
samples the source at s = (t + 0.5)/scale - 0.5. Decimation stretches the
kernel support by the downsampling factor (anti-aliased resize, not plain
subsampling); interpolation evaluates the kernel at unit scale. Source
indices are clamped at the image edge and the tap weights of every output
pixel are normalized to sum to one, so flat regions pass through unchanged.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .cube import ImageCube

__all__ = ["FilterKind", "decimate", "interpolate", "kernel_weight"]

_KEYS_A = -0.5  # cubic convolution constant of the common imaging default


class FilterKind(str, Enum):
    BICUBIC = "bicubic"
    BILINEAR = "bilinear"
    NEAREST = "nearest"

    @classmethod
    def parse(cls, name: "FilterKind | str") -> "FilterKind":
        if isinstance(name, FilterKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown filter {name!r}; expected one of {[k.value for k in cls]}"
            ) from None


_RADIUS = {FilterKind.BICUBIC: 2.0, FilterKind.BILINEAR: 1.0, FilterKind.NEAREST: 0.5}


def kernel_weight(kind: FilterKind, x) -> np.ndarray:
    """Evaluate the 1-D reconstruction kernel at offsets ``x``."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    if kind is FilterKind.NEAREST:
        return (ax < 0.5).astype(np.float64)
    if kind is FilterKind.BILINEAR:
        return np.maximum(0.0, 1.0 - ax)
    a = _KEYS_A
    near = ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
    far = ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def decimate(cube: ImageCube, factor: int, filter: "FilterKind | str") -> ImageCube:
    """Low-pass filter and downsample both spatial axes by an integer factor."""
    kind = FilterKind.parse(filter)
    factor = _check_factor(factor)
    if cube.rows % factor or cube.cols % factor:
        raise ValueError(
            f"dimensions {cube.rows}x{cube.cols} not divisible by factor {factor}"
        )
    return ImageCube(_resize(cube.data, factor, kind, upsample=False))


def interpolate(cube: ImageCube, factor: int, filter: "FilterKind | str") -> ImageCube:
    """Upsample both spatial axes by an integer factor."""
    kind = FilterKind.parse(filter)
    factor = _check_factor(factor)
    return ImageCube(_resize(cube.data, factor, kind, upsample=True))


def _check_factor(factor) -> int:
    if int(factor) != factor or factor < 1:
        raise ValueError(f"resampling factor must be an integer >= 1, got {factor!r}")
    return int(factor)


def _resize(data: np.ndarray, factor: int, kind: FilterKind, upsample: bool) -> np.ndarray:
    scale = float(factor) if upsample else 1.0 / factor
    stretch = 1.0 if upsample else float(factor)
    rows_out = data.shape[0] * factor if upsample else data.shape[0] // factor
    cols_out = data.shape[1] * factor if upsample else data.shape[1] // factor
    idx, wgt = _axis_taps(data.shape[0], rows_out, scale, stretch, kind)
    tmp = _apply_axis(data, idx, wgt)
    idx, wgt = _axis_taps(data.shape[1], cols_out, scale, stretch, kind)
    return _apply_axis(tmp.transpose(1, 0, 2), idx, wgt).transpose(1, 0, 2)


def _axis_taps(n_in: int, n_out: int, scale: float, stretch: float, kind: FilterKind):
    """Tap indices and normalized weights for one axis of the resize."""
    radius = _RADIUS[kind] * stretch
    n_taps = int(np.ceil(2.0 * radius)) + 1
    s = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    lo = np.floor(s - radius).astype(np.int64)
    idx = lo[:, None] + np.arange(n_taps, dtype=np.int64)[None, :]
    wgt = kernel_weight(kind, (s[:, None] - idx) / stretch)
    idx = np.clip(idx, 0, n_in - 1)
    _normalize_rows(wgt)
    return idx, wgt


def _normalize_rows(wgt: np.ndarray) -> None:
    """Make every row sum to exactly 1.0 under sequential tap accumulation."""
    wgt /= wgt.sum(axis=1, keepdims=True)
    for row in wgt:
        j = int(np.argmax(np.abs(row)))
        for _ in range(4):
            err = _tap_sum(row) - 1.0
            if err == 0.0:
                break
            row[j] -= err


def _tap_sum(row: np.ndarray) -> float:
    # mirrors the accumulation order of _apply_axis
    total = 0.0
    for v in row.tolist():
        total += v
    return total


def _apply_axis(arr: np.ndarray, idx: np.ndarray, wgt: np.ndarray) -> np.ndarray:
    out = np.zeros((idx.shape[0],) + arr.shape[1:], dtype=np.float64)
    shape = (-1,) + (1,) * (arr.ndim - 1)
    for t in range(idx.shape[1]):
        out += wgt[:, t].reshape(shape) * arr[idx[:, t]]
    return out
