"""Model description, parameter containers, and the composed forward/backward.

A model is a flat list of layer specs applied in order to a (C, H, W)
input.  Convolutions are fixed at 3x3 with same-padding; a residual block
wraps Conv-ReLU-Conv around a skip connection (with a 1x1 stride-matching
projection when shapes differ) and applies no activation after the sum.
Parameters live in a name->array dict so optimizers, checkpoints, and the
weight file format all share one flat addressing scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops

KERNEL = 3  # all full convolutions are 3x3 with pad 1 (same padding)
PAD = 1


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    stride: int = 1
    kind: str = field(default="conv2d", init=False, repr=False)

    def __post_init__(self):
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")


@dataclass(frozen=True)
class MaxPool:
    kind: str = field(default="maxpool", init=False, repr=False)


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False, repr=False)


@dataclass(frozen=True)
class GlobalAvgPool:
    kind: str = field(default="gap", init=False, repr=False)


@dataclass(frozen=True)
class Dense:
    units: int
    kind: str = field(default="dense", init=False, repr=False)

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind: str = field(default="dropout", init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class ResidualBlock:
    channels: int
    stride: int = 1
    kind: str = field(default="residual", init=False, repr=False)

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")


@dataclass(frozen=True)
class Softmax:
    kind: str = field(default="softmax", init=False, repr=False)


_LAYER_KINDS = {
    "conv2d": Conv2D,
    "maxpool": MaxPool,
    "relu": ReLU,
    "gap": GlobalAvgPool,
    "dense": Dense,
    "dropout": Dropout,
    "residual": ResidualBlock,
    "softmax": Softmax,
}


@dataclass(frozen=True)
class ModelSpec:
    """Input geometry plus an ordered layer list ending Dense(2), Softmax."""

    input_size: tuple  # (channels, height, width)
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_size) != 3 or min(self.input_size) < 1:
            raise ValueError(f"input_size must be (C, H, W) positive, got {self.input_size}")
        if len(self.layers) < 2:
            raise ValueError("a model needs at least Dense(2) and Softmax")
        head, tail = self.layers[-2], self.layers[-1]
        if not (isinstance(head, Dense) and head.units == 2 and isinstance(tail, Softmax)):
            raise ValueError("layer list must end with Dense(2) followed by Softmax")
        infer_shapes(self)  # raises on any incompatibility


def infer_shapes(spec: ModelSpec) -> list:
    """Symbolic output shape of every layer; raises with the offending index."""
    shape = spec.input_size
    shapes = []
    for i, layer in enumerate(spec.layers):
        try:
            shape = _layer_shape(layer, shape)
        except ValueError as exc:
            raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        shapes.append(shape)
    if shapes[-1] != (2,):
        raise ValueError(f"final output shape must be (2,), got {shapes[-1]}")
    return shapes


def _conv_extent(extent: int, stride: int) -> int:
    return (extent + 2 * PAD - KERNEL) // stride + 1


def _layer_shape(layer, shape):
    if isinstance(layer, (Conv2D, ResidualBlock)):
        if len(shape) != 3:
            raise ValueError(f"needs a (C, H, W) input, got shape {shape}")
        c, h, w = shape
        if h + 2 * PAD < KERNEL or w + 2 * PAD < KERNEL:
            raise ValueError(f"spatial extent {h}x{w} too small")
        out_c = layer.out_channels if isinstance(layer, Conv2D) else layer.channels
        return (out_c, _conv_extent(h, layer.stride), _conv_extent(w, layer.stride))
    if isinstance(layer, MaxPool):
        if len(shape) != 3:
            raise ValueError(f"needs a (C, H, W) input, got shape {shape}")
        c, h, w = shape
        if h % 2 or w % 2:
            raise ValueError(f"needs even spatial extents, got {h}x{w}")
        return (c, h // 2, w // 2)
    if isinstance(layer, GlobalAvgPool):
        if len(shape) != 3:
            raise ValueError(f"needs a (C, H, W) input, got shape {shape}")
        return (shape[0],)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ValueError(f"needs a flat input, got shape {shape}")
        return (layer.units,)
    if isinstance(layer, (ReLU, Dropout, Softmax)):
        return shape
    raise ValueError(f"unknown layer {layer!r}")


# --------------------------------------------------------------------------
# Parameters


@dataclass
class ModelParams:
    """Flat name->tensor mapping plus a per-tensor trainable flag."""

    tensors: dict
    trainable: dict

    def names(self):
        return list(self.tensors.keys())

    def copy(self) -> "ModelParams":
        return ModelParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            trainable=dict(self.trainable),
        )

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _residual_needs_projection(layer: ResidualBlock, in_channels: int) -> bool:
    return layer.stride != 1 or in_channels != layer.channels


def param_shapes(spec: ModelSpec) -> dict:
    """Name -> shape for every parameter tensor, in deterministic layer order."""
    shapes = {}
    shape = spec.input_size
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv2D):
            shapes[f"{i}.w"] = (layer.out_channels, shape[0], KERNEL, KERNEL)
            shapes[f"{i}.b"] = (layer.out_channels,)
        elif isinstance(layer, Dense):
            shapes[f"{i}.w"] = (shape[0], layer.units)
            shapes[f"{i}.b"] = (layer.units,)
        elif isinstance(layer, ResidualBlock):
            c_in, c_out = shape[0], layer.channels
            shapes[f"{i}.conv1.w"] = (c_out, c_in, KERNEL, KERNEL)
            shapes[f"{i}.conv1.b"] = (c_out,)
            shapes[f"{i}.conv2.w"] = (c_out, c_out, KERNEL, KERNEL)
            shapes[f"{i}.conv2.b"] = (c_out,)
            if _residual_needs_projection(layer, c_in):
                shapes[f"{i}.proj.w"] = (c_out, c_in, 1, 1)
                shapes[f"{i}.proj.b"] = (c_out,)
        shape = _layer_shape(layer, shape)
    return shapes


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Fan-in scaled normal weights (std sqrt(2/fan_in)), zero biases."""
    tensors = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            std = np.sqrt(2.0 / fan_in)
            tensors[name] = rng.normal(0.0, std, size=shape)
    return ModelParams(tensors=tensors, trainable={k: True for k in tensors})


def head_param_names(spec: ModelSpec) -> list:
    """Parameters of layers strictly after the (last) global average pool."""
    gap_at = max(
        (i for i, layer in enumerate(spec.layers) if isinstance(layer, GlobalAvgPool)),
        default=-1,
    )
    prefix_ok = lambda name: int(name.split(".", 1)[0]) > gap_at
    return [name for name in param_shapes(spec) if prefix_ok(name)]


# --------------------------------------------------------------------------
# Forward / backward


def _layer_forward(layer, i, x, params, training, rng):
    t = params.tensors
    if isinstance(layer, Conv2D):
        return ops.conv2d_forward(x, t[f"{i}.w"], t[f"{i}.b"], layer.stride, PAD)
    if isinstance(layer, MaxPool):
        return ops.maxpool2d_forward(x)
    if isinstance(layer, ReLU):
        return ops.relu_forward(x)
    if isinstance(layer, GlobalAvgPool):
        return ops.global_avg_pool_forward(x)
    if isinstance(layer, Dense):
        return ops.dense_forward(x, t[f"{i}.w"], t[f"{i}.b"])
    if isinstance(layer, Dropout):
        if training and layer.rate > 0.0 and rng is None:
            raise ValueError("training-mode dropout needs an rng")
        return ops.dropout_forward(x, layer.rate, rng, training)
    if isinstance(layer, ResidualBlock):
        mid, c1 = ops.conv2d_forward(x, t[f"{i}.conv1.w"], t[f"{i}.conv1.b"], layer.stride, PAD)
        act, mask = ops.relu_forward(mid)
        main, c2 = ops.conv2d_forward(act, t[f"{i}.conv2.w"], t[f"{i}.conv2.b"], 1, PAD)
        if f"{i}.proj.w" in t:
            skip, cp = ops.conv2d_forward(x, t[f"{i}.proj.w"], t[f"{i}.proj.b"], layer.stride, 0)
        else:
            skip, cp = x, None
        return main + skip, (c1, mask, c2, cp)
    if isinstance(layer, Softmax):
        return ops.softmax(x), None
    raise ValueError(f"unknown layer {layer!r}")


def _layer_backward(layer, i, dout, cache, params, grads):
    if isinstance(layer, Conv2D):
        dx, dw, db = ops.conv2d_backward(dout, cache)
        grads[f"{i}.w"] = dw
        grads[f"{i}.b"] = db
        return dx
    if isinstance(layer, MaxPool):
        return ops.maxpool2d_backward(dout, cache)
    if isinstance(layer, ReLU):
        return ops.relu_backward(dout, cache)
    if isinstance(layer, GlobalAvgPool):
        return ops.global_avg_pool_backward(dout, cache)
    if isinstance(layer, Dense):
        dx, dw, db = ops.dense_backward(dout, cache, params.tensors[f"{i}.w"])
        grads[f"{i}.w"] = dw
        grads[f"{i}.b"] = db
        return dx
    if isinstance(layer, Dropout):
        return ops.dropout_backward(dout, cache)
    if isinstance(layer, ResidualBlock):
        c1, mask, c2, cp = cache
        dmain, dw2, db2 = ops.conv2d_backward(dout, c2)
        grads[f"{i}.conv2.w"] = dw2
        grads[f"{i}.conv2.b"] = db2
        dmid = ops.relu_backward(dmain, mask)
        dx, dw1, db1 = ops.conv2d_backward(dmid, c1)
        grads[f"{i}.conv1.w"] = dw1
        grads[f"{i}.conv1.b"] = db1
        if cp is not None:
            dskip, dwp, dbp = ops.conv2d_backward(dout, cp)
            grads[f"{i}.proj.w"] = dwp
            grads[f"{i}.proj.b"] = dbp
        else:
            dskip = dout
        return dx + dskip
    raise ValueError(f"unknown layer {layer!r}")


def forward_batch(spec: ModelSpec, params: ModelParams, x: np.ndarray,
                  training: bool = False, rng=None):
    """x: (N, C, H, W) -> (probabilities (N, 2), per-layer cache list)."""
    if x.shape[1:] != spec.input_size:
        raise ValueError(f"input shape {x.shape[1:]} != spec input {spec.input_size}")
    caches = []
    for i, layer in enumerate(spec.layers):
        try:
            x, cache = _layer_forward(layer, i, x, params, training, rng)
        except ValueError as exc:
            raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        caches.append(cache)
    return x, caches


def model_forward(spec: ModelSpec, params: ModelParams, x, mode: str = "infer", rng=None):
    """Single input (C, H, W) -> (length-2 probabilities, cache)."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    xb = np.asarray(x, dtype=np.float64)[None]
    probs, caches = forward_batch(spec, params, xb, training=(mode == "train"), rng=rng)
    return probs[0], caches


def loss_and_grads(spec: ModelSpec, params: ModelParams, x: np.ndarray,
                   labels: np.ndarray, rng=None):
    """Mean cross-entropy over the batch plus exact gradients, batched input.

    With an rng, dropout layers run in training mode; without one they act
    as identity, keeping the whole evaluation a pure function of (params, x).
    """
    probs, caches = forward_batch(spec, params, x, training=rng is not None, rng=rng)
    loss, dx = ops.cross_entropy_batch(probs, labels)
    grads = params.zeros_like()
    # the final softmax is fused with the loss gradient, so skip its cache
    for i in range(len(spec.layers) - 2, -1, -1):
        dx = _layer_backward(spec.layers[i], i, dx, caches[i], params, grads)
    for name, flag in params.trainable.items():
        if not flag:
            grads[name][...] = 0.0
    return loss, grads


def model_backward(spec: ModelSpec, params: ModelParams, batch, rng=None):
    """batch: non-empty list of ((C, H, W) input, label) -> (mean_loss, grads)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    x = np.stack([np.asarray(inp, dtype=np.float64) for inp, _ in batch])
    labels = np.array([label for _, label in batch], dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return loss_and_grads(spec, params, x, labels, rng=rng)


# --------------------------------------------------------------------------
# Spec serialization (shared by the weight file format and bundle manifests)


def spec_to_dict(spec: ModelSpec) -> dict:
    layers = []
    for layer in spec.layers:
        entry = {"kind": layer.kind}
        if isinstance(layer, Conv2D):
            entry.update(out_channels=layer.out_channels, stride=layer.stride)
        elif isinstance(layer, Dense):
            entry.update(units=layer.units)
        elif isinstance(layer, Dropout):
            entry.update(rate=layer.rate)
        elif isinstance(layer, ResidualBlock):
            entry.update(channels=layer.channels, stride=layer.stride)
        layers.append(entry)
    return {"input_size": list(spec.input_size), "layers": layers}


def spec_from_dict(data: dict) -> ModelSpec:
    layers = []
    for entry in data["layers"]:
        kwargs = {k: v for k, v in entry.items() if k != "kind"}
        try:
            cls = _LAYER_KINDS[entry["kind"]]
        except KeyError:
            raise ValueError(f"unknown layer kind {entry['kind']!r}") from None
        layers.append(cls(**kwargs))
    return ModelSpec(input_size=tuple(data["input_size"]), layers=tuple(layers))
