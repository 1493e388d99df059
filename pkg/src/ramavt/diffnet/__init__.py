"""Minimal reverse-mode differentiable computation core."""

from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, adam_step, clip_grad_norm
from .ops import (
    GATES,
    DegenerateVarianceError,
    EmptySequenceError,
    LSTMParams,
    add,
    batchnorm2d,
    bmm,
    concat,
    conv2d,
    conv_output_extent,
    dense,
    elementwise,
    global_avg_pool,
    lstm_step,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice0,
    softmax,
    sub,
    sum_all,
    tanh,
    transpose_last2,
)
from .tensor import ShapeError, Tape, TapeError, Tensor, backward

__all__ = [
    "Adam",
    "DegenerateVarianceError",
    "EmptySequenceError",
    "GATES",
    "GradCheckReport",
    "LSTMParams",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "batchnorm2d",
    "bmm",
    "clip_grad_norm",
    "concat",
    "conv2d",
    "conv_output_extent",
    "dense",
    "elementwise",
    "global_avg_pool",
    "grad_check",
    "lstm_step",
    "matmul",
    "mean",
    "mul",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "slice0",
    "softmax",
    "sub",
    "sum_all",
    "tanh",
    "transpose_last2",
]
