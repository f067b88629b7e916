"""Image-cube data model and bit-exact HSC1 file I/O.

The on-disk layout is fixed and platform independent: a 4-byte ``HSC1``
magic, three little-endian uint32 dimensions (rows, cols, bands), then the
samples as little-endian float32, band-sequential (band-major, row-major
within a band), with no trailing bytes. In memory the samples are kept at
float64 so that downstream gradient checks have precision headroom.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ImageCube",
    "CubeFormatError",
    "read_cube",
    "write_cube",
    "stack",
    "slice_bands",
]

MAGIC = b"HSC1"
_HEADER = struct.Struct("<4sIII")


class CubeFormatError(ValueError):
    """A cube file violates the HSC1 layout."""


@dataclass(frozen=True)
class ImageCube:
    """Immutable (rows, cols, bands) raster of finite float64 samples.

    A zero-band cube is legal only as the neutral element of :func:`stack`;
    it is rejected by file I/O and by the fusion pipeline.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 3:
            raise ValueError(f"cube data must be 3-D (rows, cols, bands), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"cube needs positive spatial dimensions, got {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("cube samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def unfold(self) -> np.ndarray:
        """Return the (rows*cols, bands) matrix view with one band per column."""
        return self.data.reshape(self.rows * self.cols, self.bands)


def read_cube(path: str | Path) -> ImageCube:
    """Read an HSC1 cube file, widening stored float32 samples to float64."""
    p = Path(path)
    blob = p.read_bytes()  # missing file surfaces as FileNotFoundError
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise CubeFormatError(f"{p}: bad magic, not an HSC1 cube")
    if len(blob) < _HEADER.size:
        raise CubeFormatError(f"{p}: truncated header ({len(blob)} bytes)")
    _, rows, cols, bands = _HEADER.unpack_from(blob)
    if rows == 0 or cols == 0 or bands == 0:
        raise CubeFormatError(f"{p}: zero dimension in header ({rows}x{cols}x{bands})")
    expected = rows * cols * bands * 4
    payload = len(blob) - _HEADER.size
    if payload < expected:
        raise CubeFormatError(f"{p}: truncated payload, expected {expected} bytes, got {payload}")
    if payload > expected:
        raise CubeFormatError(f"{p}: {payload - expected} trailing bytes after payload")
    flat = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    data = flat.reshape(bands, rows, cols).transpose(1, 2, 0)
    if not np.isfinite(data).all():
        raise CubeFormatError(f"{p}: payload contains non-finite samples")
    return ImageCube(np.asarray(data, dtype=np.float64))


def write_cube(cube: ImageCube, path: str | Path) -> None:
    """Write a cube as HSC1; the byte stream is a pure function of the cube."""
    if cube.bands == 0:
        raise ValueError("cannot write a zero-band cube")
    header = _HEADER.pack(MAGIC, cube.rows, cube.cols, cube.bands)
    body = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype="<f4").tobytes()
    Path(path).write_bytes(header + body)


def stack(a: ImageCube, b: ImageCube) -> ImageCube:
    """Concatenate two cubes along the band axis, a's bands first."""
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise ValueError(
            f"spatial dimensions differ: {a.rows}x{a.cols} vs {b.rows}x{b.cols}"
        )
    return ImageCube(np.concatenate((a.data, b.data), axis=2))


def slice_bands(cube: ImageCube, first: int, count: int) -> ImageCube:
    """Extract ``count`` consecutive bands starting at ``first``."""
    if first < 0 or count < 0 or first + count > cube.bands:
        raise ValueError(
            f"band slice [{first}, {first + count}) out of range for {cube.bands} bands"
        )
    return ImageCube(cube.data[:, :, first : first + count])
