"""Deterministic rank-4 tensor arithmetic with reverse-mode differentiation."""

from .tensor import Tensor, Tape, as_tensor, backward, no_grad, use_dtype, default_dtype, grad_enabled
from .functional import (
    ShapeError,
    PoolIndices,
    RunningStats,
    add, sub, mul, div, power, exp, log, sqrt, absolute,
    relu, leaky_relu, sigmoid, where,
    sum_, mean, max_, reshape, concat, slice_batch, softmax,
    conv2d, maxpool2d_with_indices, unpool, upsample_nearest, batch_norm,
)
from .adam import AdamState, adam_step
from .gradcheck import grad_check, make_inputs

__all__ = [
    "Tensor", "Tape", "as_tensor", "backward", "no_grad", "use_dtype",
    "default_dtype", "grad_enabled",
    "ShapeError", "PoolIndices", "RunningStats",
    "add", "sub", "mul", "div", "power", "exp", "log", "sqrt", "absolute",
    "relu", "leaky_relu", "sigmoid", "where",
    "sum_", "mean", "max_", "reshape", "concat", "slice_batch", "softmax",
    "conv2d", "maxpool2d_with_indices", "unpool", "upsample_nearest", "batch_norm",
    "AdamState", "adam_step", "grad_check", "make_inputs",
]
