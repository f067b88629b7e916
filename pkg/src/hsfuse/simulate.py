"""Experimental input simulation: MS synthesis, reduced-scale pairs, noise.

A multispectral image is simulated from a band-rich cube by averaging its
bands under a spectral response matrix; the reduced-scale evaluation pair is
produced by decimating the reference, which then doubles as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import ImageCube
from .resample import FilterKind, decimate

__all__ = ["SpectralResponse", "simulate_ms", "make_wald_pair", "add_noise"]

# band-edge wavelengths (nm) of the R, G, B, NIR channels of a typical
# 4-band imaging satellite, used for the built-in response
_RGBN_EDGES = (("r", 632.0, 698.0), ("g", 506.0, 595.0), ("b", 445.0, 516.0), ("n", 757.0, 853.0))
_GRID_NM = (430.0, 860.0)


@dataclass(frozen=True)
class SpectralResponse:
    """Nonnegative (out_bands x in_bands) weights; rows normalized to sum 1."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError(f"response must be a 2-D matrix, got shape {w.shape}")
        if np.any(w < 0.0) or not np.isfinite(w).all():
            raise ValueError("response weights must be finite and nonnegative")
        sums = w.sum(axis=1)
        if np.any(sums <= 0.0):
            raise ValueError("every response row needs at least one positive weight")
        w /= sums[:, None]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def out_bands(self) -> int:
        return self.weights.shape[0]

    @property
    def in_bands(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def from_csv(cls, path: str | Path) -> "SpectralResponse":
        """Load rows of comma-separated weights; '#' comments and blanks ignored."""
        rows = []
        for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                rows.append([float(v) for v in text.split(",")])
            except ValueError:
                raise ValueError(f"{path}:{ln}: malformed response row {text!r}") from None
        if not rows:
            raise ValueError(f"{path}: no response rows found")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError(f"{path}: response rows have inconsistent lengths")
        return cls(np.asarray(rows, dtype=np.float64))

    @classmethod
    def block_average(cls, out_bands: int, in_bands: int) -> "SpectralResponse":
        """Contiguous equal-split block averages; handy for synthetic data."""
        if not 1 <= out_bands <= in_bands:
            raise ValueError(f"need 1 <= out_bands <= in_bands, got {out_bands}, {in_bands}")
        w = np.zeros((out_bands, in_bands))
        for p in range(out_bands):
            lo = p * in_bands // out_bands
            hi = (p + 1) * in_bands // out_bands
            w[p, lo:hi] = 1.0
        return cls(w)

    @classmethod
    def rgbn(cls, in_bands: int) -> "SpectralResponse":
        """Built-in R, G, B, NIR block response on a 430-860 nm band grid."""
        if in_bands < 2:
            raise ValueError("built-in response needs at least 2 input bands")
        lo_nm, hi_nm = _GRID_NM
        centers = np.linspace(lo_nm, hi_nm, in_bands)
        w = np.zeros((4, in_bands))
        for row, (_, lo, hi) in enumerate(_RGBN_EDGES):
            inside = (centers >= lo) & (centers <= hi)
            if inside.any():
                w[row, inside] = 1.0
            else:  # coarse grid: fall back to the band nearest the channel center
                w[row, int(np.argmin(np.abs(centers - (lo + hi) / 2.0)))] = 1.0
        return cls(w)


def simulate_ms(hs: ImageCube, response: SpectralResponse) -> ImageCube:
    """Average the cube's bands under the response rows, pixel by pixel."""
    if response.in_bands != hs.bands:
        raise ValueError(
            f"response has {response.in_bands} columns but cube has {hs.bands} bands"
        )
    return ImageCube(np.tensordot(hs.data, response.weights, axes=([2], [1])))


def make_wald_pair(
    reference: ImageCube,
    response: SpectralResponse,
    factor: int,
    filter: "FilterKind | str",
) -> tuple[ImageCube, ImageCube]:
    """Simulated full-resolution MS image and decimated low-resolution cube.

    The reference itself serves as ground truth for evaluating fusion output.
    """
    ms = simulate_ms(reference, response)
    lr = decimate(reference, factor, filter)
    return ms, lr


def add_noise(cube: ImageCube, snr_db: float, rng: np.random.Generator) -> ImageCube:
    """Add white Gaussian noise at the given global SNR; +inf means none."""
    if math.isinf(snr_db) and snr_db > 0:
        return cube
    if not math.isfinite(snr_db):
        raise ValueError(f"SNR must be finite or +inf, got {snr_db}")
    power = float(np.mean(cube.data**2))
    if power == 0.0:
        raise ValueError("SNR is undefined for an all-zero cube")
    sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0))
    return ImageCube(cube.data + rng.normal(0.0, sigma, cube.data.shape))
