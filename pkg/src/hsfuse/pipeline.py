"""Training at reduced scale and full-scale fusion.

Training follows the reduced-scale protocol: decompose the low-resolution
cube into spectral vectors and loadings, decimate the MS image and the
retained loadings to a coarser scale (the loadings are interpolated back so
they are blurry at the training resolution), stack them, and sample matched
patch pairs against the sharp loadings as targets. Fusion runs the trained
network once over the full-resolution stack and reconstructs the band space
through the spectral vectors, either keeping the remaining interpolated
loadings ("full") or truncating to the sharpened ones ("reduced").
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .cube import ImageCube, slice_bands, stack
from .linalg import PcaModel, pca_decompose, reconstruct_full, reconstruct_reduced
from .net import (
    AdamState,
    Network,
    adam_step,
    build_network,
    forward,
    init_params,
    mse_loss,
    backward,
    parameters,
    set_parameters,
)
from .resample import FilterKind, decimate, interpolate

__all__ = ["TrainConfig", "TrainingSet", "FusionResult", "prepare_training_set", "train", "fuse"]

# RNG stream tags so the stages draw from independent deterministic streams
_STREAM_PATCHES = 0
_STREAM_INIT = 1
_STREAM_TRAIN = 2
STREAM_NOISE = 3  # used by callers that corrupt the low-resolution input


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of the training and fusion pipeline."""

    r: int = 10
    patch_size: int = 7
    n_patches: int = 8192
    epochs: int = 50
    batch_size: int = 5
    noise_variance: float = 0.5
    adam: tuple[float, float, float, float] = (0.001, 0.9, 0.999, 1e-8)
    seed: int = 0
    scale_factor: int = 4
    filter: FilterKind = FilterKind.BICUBIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "filter", FilterKind.parse(self.filter))
        object.__setattr__(self, "adam", tuple(float(v) for v in self.adam))
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError(f"patch_size must be odd and positive, got {self.patch_size}")
        if self.batch_size < 1 or self.n_patches < self.batch_size:
            raise ValueError(
                f"need n_patches >= batch_size >= 1, got {self.n_patches}, {self.batch_size}"
            )
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.noise_variance < 0.0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.scale_factor < 1:
            raise ValueError(f"scale_factor must be >= 1, got {self.scale_factor}")
        if len(self.adam) != 4:
            raise ValueError("adam must be (alpha, beta1, beta2, eps)")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "patch_size": self.patch_size,
            "n_patches": self.n_patches,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "noise_variance": self.noise_variance,
            "adam": list(self.adam),
            "seed": self.seed,
            "scale_factor": self.scale_factor,
            "filter": self.filter.value,
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TrainConfig":
        kwargs = dict(data)
        if "adam" in kwargs:
            kwargs["adam"] = tuple(kwargs["adam"])
        return cls(**kwargs)


@dataclass(frozen=True)
class TrainingSet:
    """Matched input/target patches, already divided by the scale ``s``."""

    inputs: np.ndarray  # (n, patch, patch, r+P)
    targets: np.ndarray  # (n, patch, patch, r)
    scale: float


@dataclass(frozen=True)
class FusionResult:
    fused: ImageCube
    loadings_hr: ImageCube
    loss_history: tuple[float, ...] = ()
    mode: str = "full"


def prepare_training_set(
    ms: ImageCube, hs: ImageCube, cfg: TrainConfig
) -> tuple[TrainingSet, PcaModel]:
    """Build the reduced-scale patch set and the spectral model of ``hs``."""
    f = cfg.scale_factor
    if ms.rows != hs.rows * f or ms.cols != hs.cols * f:
        raise ValueError(
            f"MS {ms.rows}x{ms.cols} is not {f}x the HS {hs.rows}x{hs.cols} grid"
        )
    if cfg.r > hs.bands:
        raise ValueError(f"r={cfg.r} exceeds the {hs.bands} bands of the input cube")
    if hs.rows % f or hs.cols % f:
        raise ValueError(
            f"HS dimensions {hs.rows}x{hs.cols} not divisible by factor {f}"
        )
    model = pca_decompose(hs)
    g_r = slice_bands(model.loadings, 0, cfg.r)
    x_lr_ms = decimate(ms, f, cfg.filter)
    g_lr = interpolate(decimate(g_r, f, cfg.filter), f, cfg.filter)
    x_lr = stack(x_lr_ms, g_lr)
    ps = cfg.patch_size
    if x_lr.rows < ps or x_lr.cols < ps:
        raise ValueError(
            f"decimated image {x_lr.rows}x{x_lr.cols} is smaller than a {ps}x{ps} patch"
        )
    scale = float(np.max(np.abs(x_lr.data)))
    if scale == 0.0:
        scale = 1.0
    rng = np.random.default_rng([cfg.seed, _STREAM_PATCHES])
    top = rng.integers(0, x_lr.rows - ps + 1, size=cfg.n_patches)
    left = rng.integers(0, x_lr.cols - ps + 1, size=cfg.n_patches)
    inputs = np.stack([x_lr.data[t : t + ps, l : l + ps, :] for t, l in zip(top, left)])
    targets = np.stack([g_r.data[t : t + ps, l : l + ps, :] for t, l in zip(top, left)])
    return TrainingSet(inputs=inputs / scale, targets=targets / scale, scale=scale), model


def train(set: TrainingSet, cfg: TrainConfig) -> tuple[Network, list[float]]:
    """Train the default network on the patch set; returns it in infer mode."""
    n, ps, _, depth = set.inputs.shape
    r = set.targets.shape[3]
    net = build_network(r, depth, noise_variance=cfg.noise_variance)
    init_params(np.random.default_rng([cfg.seed, _STREAM_INIT]), net)
    rng = np.random.default_rng([cfg.seed, _STREAM_TRAIN])
    params = parameters(net)
    state = AdamState.init(params, *cfg.adam)
    steps = n // cfg.batch_size  # a trailing partial batch is dropped
    history: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        losses = np.empty(steps)
        for step in range(steps):
            idx = order[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            x = set.inputs[idx][..., None]
            y = set.targets[idx][:, :, :, None, :]
            out, cache = forward(net, x, rng)
            loss, grad = mse_loss(out, y)
            grads = backward(net, cache, grad)
            params, state = adam_step(params, grads, state)
            set_parameters(net, params)
            losses[step] = loss
        history.append(float(losses.mean()))
    net.mode = "infer"
    net.input_scale = set.scale
    return net, history


def fuse(
    net: Network,
    ms: ImageCube,
    hs: ImageCube,
    model: PcaModel,
    cfg: TrainConfig,
    mode: str = "full",
) -> FusionResult:
    """One inference pass over the full-resolution stack plus reconstruction."""
    if mode not in ("full", "reduced"):
        raise ValueError(f"mode must be 'full' or 'reduced', got {mode!r}")
    if net.mode != "infer":
        raise ValueError("network must be in infer mode; train() leaves it there")
    convs = net.conv_layers()
    r = convs[-1].filters
    depth = convs[-1].kernel[2]
    q = model.bands
    if cfg.r != r:
        raise ValueError(f"network sharpens r={r} loadings but config says r={cfg.r}")
    if r > q:
        raise ValueError(f"network r={r} exceeds the {q} spectral bands of the model")
    f = cfg.scale_factor
    if ms.rows != hs.rows * f or ms.cols != hs.cols * f:
        raise ValueError(
            f"MS {ms.rows}x{ms.cols} is not {f}x the HS {hs.rows}x{hs.cols} grid"
        )
    g_up = interpolate(slice_bands(model.loadings, 0, r), f, cfg.filter)
    x = stack(ms, g_up)
    if x.bands != depth:
        raise ValueError(
            f"network expects input depth {depth} (r+P) but the stack has {x.bands} bands"
        )
    out, _ = forward(net, (x.data / net.input_scale)[..., None])
    loadings_hr = ImageCube(out[:, :, 0, :] * net.input_scale)
    if mode == "full":
        rest = interpolate(slice_bands(model.loadings, r, q - r), f, cfg.filter)
        fused = reconstruct_full(loadings_hr, rest, model)
    else:
        fused = reconstruct_reduced(loadings_hr, model, r)
    return FusionResult(fused=fused, loadings_hr=loadings_hr, mode=mode)
