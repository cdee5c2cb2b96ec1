"""Numpy CNN core: kernels, model composition, and weight files."""

from .ops import (
    conv2d,
    cross_entropy,
    dropout,
    global_avg_pool,
    maxpool2d,
    relu,
    softmax,
)
from .model import (
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool,
    ModelParams,
    ModelSpec,
    ReLU,
    ResidualBlock,
    Softmax,
    forward_batch,
    head_param_names,
    infer_shapes,
    init_params,
    loss_and_grads,
    model_backward,
    model_forward,
    param_shapes,
    spec_from_dict,
    spec_to_dict,
)
from .weights import WeightFile, WeightFormatError, load_weights, save_weights

__all__ = [
    "Conv2D", "Dense", "Dropout", "GlobalAvgPool", "MaxPool", "ModelParams",
    "ModelSpec", "ReLU", "ResidualBlock", "Softmax", "WeightFile",
    "WeightFormatError", "conv2d", "cross_entropy", "dropout", "forward_batch",
    "global_avg_pool", "head_param_names", "infer_shapes", "init_params",
    "load_weights", "loss_and_grads", "maxpool2d", "model_backward",
    "model_forward", "param_shapes", "relu", "save_weights", "softmax",
    "spec_from_dict", "spec_to_dict",
]
