"""A small 3-D convolutional network built directly on numpy.

Layers: symmetric zero padding, valid 3-D convolution (correlation) with
per-filter bias and ReLU or linear activation, and an additive Gaussian
noise regularizer that is active only while training. The module provides
the forward pass, exact reverse-mode gradients for every weight and bias,
MSE loss, ADAM updates, Glorot initialization, and a versioned model file.

The default stack maps a (d1, d2, depth, 1) volume to (d1, d2, 1, r): two
SAME-padded 3x3x3 ReLU stages (32 and 64 filters) and a final linear stage
of r filters whose 1x1 kernels span the full remaining depth, so the r
output channels are read as the r output bands.

Tensors are (d1, d2, d3, channels), channel-minor; internally a leading
batch axis is used so minibatches hit BLAS in one call.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "Conv3dLayer",
    "ZeroPad3d",
    "GaussianNoiseLayer",
    "Network",
    "AdamState",
    "build_network",
    "init_params",
    "conv3d_forward",
    "zero_pad",
    "gaussian_noise",
    "forward",
    "backward",
    "mse_loss",
    "adam_step",
    "parameters",
    "set_parameters",
    "save_model",
    "load_model",
]

_ACTIVATIONS = ("relu", "linear")
_COLS_BUDGET = 256 * 1024 * 1024  # soft cap on the im2col buffer (bytes)

MODEL_MAGIC = b"HSN1"


@dataclass
class ZeroPad3d:
    """Symmetric zero padding of the three leading tensor axes."""

    pads: tuple[int, int, int]

    def __post_init__(self) -> None:
        p = tuple(int(v) for v in self.pads)
        if len(p) != 3 or any(v < 0 for v in p):
            raise ValueError(f"pads must be three nonnegative counts, got {self.pads!r}")
        self.pads = p


@dataclass
class Conv3dLayer:
    """Valid 3-D correlation with shared filters and biases.

    ``weights`` is (filters, in_channels, k1, k2, k3); ``biases`` one per
    filter.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "linear"

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 5:
            raise ValueError(f"weights must be 5-D, got shape {self.weights.shape}")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"need one bias per filter: {self.biases.shape} vs {self.weights.shape[0]} filters"
            )
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("weights and biases must be finite")

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int, int]:
        return self.weights.shape[2:5]


@dataclass
class GaussianNoiseLayer:
    """Adds zero-mean Gaussian noise while training; identity at inference."""

    variance: float

    def __post_init__(self) -> None:
        if self.variance < 0.0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")


Layer = ZeroPad3d | Conv3dLayer | GaussianNoiseLayer


@dataclass
class Network:
    """Ordered layer stack plus the train/infer switch.

    ``input_scale`` records the normalization divisor applied to network
    inputs, so a saved model carries everything fusion needs.
    """

    layers: list[Layer]
    mode: str = "train"
    input_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {self.mode!r}")

    def conv_layers(self) -> list[Conv3dLayer]:
        return [l for l in self.layers if isinstance(l, Conv3dLayer)]


@dataclass
class _ForwardCache:
    net: Network
    train: bool
    batched: bool
    output_shape: tuple[int, ...]
    items: list[Any] = field(default_factory=list)


def build_network(
    r: int,
    input_depth: int,
    filters: tuple[int, int] = (32, 64),
    noise_variance: float = 0.5,
) -> Network:
    """Default stack for sharpening r loading bands from an input of the
    given depth: pad/conv3x3x3/noise twice, then the depth-collapsing linear
    layer of r filters. Parameters start at zero; see :func:`init_params`.
    """
    if r < 1 or input_depth < 1:
        raise ValueError(f"need r >= 1 and input_depth >= 1, got {r}, {input_depth}")
    f1, f2 = filters
    layers: list[Layer] = [
        ZeroPad3d((1, 1, 1)),
        Conv3dLayer(np.zeros((f1, 1, 3, 3, 3)), np.zeros(f1), "relu"),
        GaussianNoiseLayer(noise_variance),
        ZeroPad3d((1, 1, 1)),
        Conv3dLayer(np.zeros((f2, f1, 3, 3, 3)), np.zeros(f2), "relu"),
        GaussianNoiseLayer(noise_variance),
        Conv3dLayer(np.zeros((r, f2, 1, 1, input_depth)), np.zeros(r), "linear"),
    ]
    return Network(layers=layers, mode="train")


def init_params(rng: np.random.Generator, net: Network) -> Network:
    """Glorot-uniform weights, zero biases; deterministic given the generator."""
    for layer in net.conv_layers():
        fan = layer.in_channels * np.prod(layer.kernel)
        fan_out = layer.filters * np.prod(layer.kernel)
        a = np.sqrt(6.0 / (fan + fan_out))
        layer.weights = rng.uniform(-a, a, size=layer.weights.shape)
        layer.biases = np.zeros(layer.filters)
    return net


def parameters(net: Network) -> list[np.ndarray]:
    """Flat parameter list: weights then biases of each conv layer in order."""
    out: list[np.ndarray] = []
    for layer in net.conv_layers():
        out.append(layer.weights)
        out.append(layer.biases)
    return out


def set_parameters(net: Network, params: list[np.ndarray]) -> None:
    convs = net.conv_layers()
    if len(params) != 2 * len(convs):
        raise ValueError(f"expected {2 * len(convs)} parameter arrays, got {len(params)}")
    for i, layer in enumerate(convs):
        w, b = params[2 * i], params[2 * i + 1]
        if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
            raise ValueError(f"parameter shape mismatch at conv layer {i}")
        layer.weights = w
        layer.biases = b


# ---------------------------------------------------------------------------
# layer operations
# ---------------------------------------------------------------------------


def zero_pad(input: np.ndarray, p1: int, p2: int, p3: int) -> np.ndarray:
    """Zero-pad the three leading axes of a (d1, d2, d3, C) tensor."""
    x = _as_tensor4(input)
    if min(p1, p2, p3) < 0:
        raise ValueError(f"pad counts must be >= 0, got {(p1, p2, p3)}")
    return _pad5(x[None], p1, p2, p3)[0]


def conv3d_forward(input: np.ndarray, layer: Conv3dLayer) -> np.ndarray:
    """Valid correlation of a single (d1, d2, d3, C) tensor with the layer."""
    x = _as_tensor4(input)
    return _conv_forward(x[None], layer, keep_cache=False)[0][0]


def gaussian_noise(
    input: np.ndarray,
    variance: float,
    rng: np.random.Generator | None,
    mode: str = "train",
) -> np.ndarray:
    """Additive N(0, variance) noise in train mode; identity otherwise."""
    if variance < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {variance}")
    x = np.asarray(input, dtype=np.float64)
    if mode != "train" or variance == 0.0:
        return x
    if rng is None:
        raise ValueError("a seeded generator is required for train-mode noise")
    return x + rng.normal(0.0, np.sqrt(variance), x.shape)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient 2*(pred - target)/count."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def forward(
    net: Network, input: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, _ForwardCache]:
    """Run the layer stack; the cache feeds :func:`backward` in train mode."""
    x = np.asarray(input, dtype=np.float64)
    batched = x.ndim == 5
    if x.ndim == 4:
        x = x[None]
    elif x.ndim != 5:
        raise ValueError(f"input must be a 4-D tensor or a batch of them, got {x.ndim}-D")
    train = net.mode == "train"
    cache = _ForwardCache(net=net, train=train, batched=batched, output_shape=())
    for i, layer in enumerate(net.layers):
        try:
            if isinstance(layer, Conv3dLayer):
                x, item = _conv_forward(x, layer, keep_cache=train)
            elif isinstance(layer, ZeroPad3d):
                x = _pad5(x, *layer.pads)
                item = None
            else:
                x = gaussian_noise(x, layer.variance, rng, mode=net.mode)
                item = None
        except ValueError as exc:
            raise ValueError(f"layer {i} ({type(layer).__name__}): {exc}") from None
        cache.items.append(item)
    cache.output_shape = x.shape
    return (x if batched else x[0]), cache


def backward(net: Network, cache: _ForwardCache, loss_grad: np.ndarray) -> list[np.ndarray]:
    """Gradients of the scalar loss for every weight and bias.

    Returns arrays in :func:`parameters` order. Requires the cache of a
    train-mode forward pass on this same network.
    """
    if cache is None or cache.net is not net or len(cache.items) != len(net.layers):
        raise ValueError("cache does not match this network")
    if not cache.train:
        raise ValueError("cache must come from a train-mode forward pass")
    g = np.asarray(loss_grad, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    if g.shape != cache.output_shape:
        raise ValueError(
            f"loss gradient shape {g.shape} does not match forward output {cache.output_shape}"
        )
    conv_positions = [i for i, l in enumerate(net.layers) if isinstance(l, Conv3dLayer)]
    first_conv = conv_positions[0] if conv_positions else -1
    rev: list[list[np.ndarray]] = []
    for pos in range(len(net.layers) - 1, -1, -1):
        layer, item = net.layers[pos], cache.items[pos]
        if isinstance(layer, Conv3dLayer):
            g, dw, db = _conv_backward(layer, item, g, need_dx=pos != first_conv)
            rev.append([dw, db])
            if pos == first_conv:  # nothing with parameters below this point
                break
        elif isinstance(layer, ZeroPad3d):
            p1, p2, p3 = layer.pads
            d1, d2, d3 = g.shape[1:4]
            g = g[:, p1 : d1 - p1, p2 : d2 - p2, p3 : d3 - p3, :]
        # noise adds an independent term; its gradient passes through
    flat: list[np.ndarray] = []
    for pair in reversed(rev):
        flat.extend(pair)
    return flat


# ---------------------------------------------------------------------------
# convolution internals
# ---------------------------------------------------------------------------


def _as_tensor4(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected a (d1, d2, d3, channels) tensor, got {arr.ndim}-D")
    return arr


def _pad5(x: np.ndarray, p1: int, p2: int, p3: int) -> np.ndarray:
    if p1 == 0 and p2 == 0 and p3 == 0:
        return x
    b, d1, d2, d3, c = x.shape
    out = np.zeros((b, d1 + 2 * p1, d2 + 2 * p2, d3 + 2 * p3, c))
    out[:, p1 : p1 + d1, p2 : p2 + d2, p3 : p3 + d3, :] = x
    return out


def _window_cols(x: np.ndarray, k1: int, k2: int, k3: int) -> np.ndarray:
    """im2col: one row per output voxel, (channels, k1, k2, k3) flattened."""
    b, d1, d2, d3, c = x.shape
    s0, s1, s2, s3, s4 = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, d1 - k1 + 1, d2 - k2 + 1, d3 - k3 + 1, c, k1, k2, k3),
        strides=(s0, s1, s2, s3, s4, s1, s2, s3),
        writeable=False,
    )
    return win.reshape(b * (d1 - k1 + 1) * (d2 - k2 + 1) * (d3 - k3 + 1), c * k1 * k2 * k3)


def _conv_forward(x: np.ndarray, layer: Conv3dLayer, keep_cache: bool):
    f, c, k1, k2, k3 = layer.weights.shape
    if x.shape[4] != c:
        raise ValueError(f"input has {x.shape[4]} channels, layer expects {c}")
    if x.shape[1] < k1 or x.shape[2] < k2 or x.shape[3] < k3:
        raise ValueError(f"kernel {k1}x{k2}x{k3} larger than input {x.shape[1:4]}")
    b, o1 = x.shape[0], x.shape[1] - k1 + 1
    o2, o3 = x.shape[2] - k2 + 1, x.shape[3] - k3 + 1
    wmat = layer.weights.reshape(f, -1)
    n_col = c * k1 * k2 * k3
    cols_cache = None
    if b * o1 * o2 * o3 * n_col * 8 <= _COLS_BUDGET:
        cols = _window_cols(x, k1, k2, k3)
        pre = (cols @ wmat.T).reshape(b, o1, o2, o3, f)
        if keep_cache:
            cols_cache = cols
    else:  # large inference inputs: bound the im2col buffer by row slabs
        pre = np.empty((b, o1, o2, o3, f))
        slab = max(1, _COLS_BUDGET // max(b * o2 * o3 * n_col * 8, 1))
        for lo in range(0, o1, slab):
            hi = min(lo + slab, o1)
            cols = _window_cols(x[:, lo : hi + k1 - 1], k1, k2, k3)
            pre[:, lo:hi] = (cols @ wmat.T).reshape(b, hi - lo, o2, o3, f)
    pre += layer.biases
    out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    cache = (x, cols_cache, pre) if keep_cache else None
    return out, cache


def _conv_backward(layer: Conv3dLayer, item, d_out: np.ndarray, need_dx: bool = True):
    x, cols, pre = item
    f, c, k1, k2, k3 = layer.weights.shape
    dpre = d_out * (pre > 0.0) if layer.activation == "relu" else d_out
    db = dpre.sum(axis=(0, 1, 2, 3))
    if cols is None:
        cols = _window_cols(x, k1, k2, k3)
    dmat = dpre.reshape(-1, f)
    dw = (dmat.T @ cols).reshape(layer.weights.shape)
    if not need_dx:
        return None, dw, db
    # col2im: push each output voxel's gradient back onto its receptive field
    b, o1, o2, o3 = dpre.shape[:4]
    dcols = (dmat @ layer.weights.reshape(f, -1)).reshape(b, o1, o2, o3, c, k1, k2, k3)
    dx = np.zeros(x.shape)
    for a1 in range(k1):
        for a2 in range(k2):
            for a3 in range(k3):
                dx[:, a1 : a1 + o1, a2 : a2 + o2, a3 : a3 + o3, :] += dcols[
                    :, :, :, :, :, a1, a2, a3
                ]
    return dx, dw, db


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for ADAM."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    alpha: float
    beta1: float
    beta2: float
    eps: float

    @classmethod
    def init(
        cls,
        params: list[np.ndarray],
        alpha: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            alpha=alpha,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected ADAM update; returns fresh parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and state lists must align")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / b1t
        v_hat = state.v[i] / b2t
        new_params.append(p - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------
#
# Layout: 4-byte magic "HSN1"; little-endian uint32 header length; UTF-8 JSON
# header; then the parameters of every conv layer in order (weights, biases)
# as little-endian float64. The header holds {"version", "input_scale",
# "layers": [{"kind": "pad"|"conv"|"noise", ...}], "train_config"}.


def save_model(net: Network, path: str | Path, train_config: dict | None = None) -> None:
    """Serialize the layer spec, parameters and training configuration."""
    spec = []
    for layer in net.layers:
        if isinstance(layer, ZeroPad3d):
            spec.append({"kind": "pad", "pads": list(layer.pads)})
        elif isinstance(layer, Conv3dLayer):
            spec.append(
                {
                    "kind": "conv",
                    "filters": layer.filters,
                    "in_channels": layer.in_channels,
                    "kernel": list(layer.kernel),
                    "activation": layer.activation,
                }
            )
        else:
            spec.append({"kind": "noise", "variance": layer.variance})
    header = {
        "version": 1,
        "input_scale": net.input_scale,
        "layers": spec,
        "train_config": train_config,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in parameters(net))
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(body)


def load_model(path: str | Path) -> tuple[Network, dict | None]:
    """Rebuild a saved network (in infer mode) and its training config."""
    blob = Path(path).read_bytes()
    if blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    (head_len,) = struct.unpack_from("<I", blob, 4)
    header = json.loads(blob[8 : 8 + head_len].decode("utf-8"))
    if header.get("version") != 1:
        raise ValueError(f"{path}: unsupported model version {header.get('version')!r}")
    layers: list[Layer] = []
    for entry in header["layers"]:
        if entry["kind"] == "pad":
            layers.append(ZeroPad3d(tuple(entry["pads"])))
        elif entry["kind"] == "conv":
            shape = (entry["filters"], entry["in_channels"], *entry["kernel"])
            layers.append(Conv3dLayer(np.zeros(shape), np.zeros(shape[0]), entry["activation"]))
        elif entry["kind"] == "noise":
            layers.append(GaussianNoiseLayer(entry["variance"]))
        else:
            raise ValueError(f"{path}: unknown layer kind {entry['kind']!r}")
    net = Network(layers=layers, mode="infer", input_scale=float(header["input_scale"]))
    buf = blob[8 + head_len :]
    offset = 0
    new_params = []
    for p in parameters(net):
        n = p.size * 8
        if offset + n > len(buf):
            raise ValueError(f"{path}: parameter payload truncated")
        new_params.append(np.frombuffer(buf, dtype="<f8", count=p.size, offset=offset).reshape(p.shape).copy())
        offset += n
    if offset != len(buf):
        raise ValueError(f"{path}: {len(buf) - offset} trailing bytes after parameters")
    set_parameters(net, new_params)
    return net, header.get("train_config")
