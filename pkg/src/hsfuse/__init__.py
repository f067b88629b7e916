"""hsfuse: MS/HS image fusion with spectral PCA reduction and a 3-D CNN."""

__version__ = "0.1.0"

from .cube import CubeFormatError, ImageCube, read_cube, slice_bands, stack, write_cube
from .linalg import PcaModel, pca_decompose, reconstruct_full, reconstruct_reduced
from .metrics import MetricsReport, ergas, evaluate_pair, sam, ssim
from .pipeline import FusionResult, TrainConfig, TrainingSet, fuse, prepare_training_set, train
from .resample import FilterKind, decimate, interpolate
from .simulate import SpectralResponse, add_noise, make_wald_pair, simulate_ms

__all__ = [
    "__version__",
    "CubeFormatError",
    "ImageCube",
    "read_cube",
    "write_cube",
    "stack",
    "slice_bands",
    "PcaModel",
    "pca_decompose",
    "reconstruct_full",
    "reconstruct_reduced",
    "MetricsReport",
    "ergas",
    "sam",
    "ssim",
    "evaluate_pair",
    "FilterKind",
    "decimate",
    "interpolate",
    "SpectralResponse",
    "simulate_ms",
    "make_wald_pair",
    "add_noise",
    "TrainConfig",
    "TrainingSet",
    "FusionResult",
    "prepare_training_set",
    "train",
    "fuse",
]
