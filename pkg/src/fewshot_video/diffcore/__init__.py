"""Minimal reverse-mode differentiation core used by every model component."""

from .gradcheck import GradCheckReport, grad_check
from .optim import AdamState, Parameters, adam_step
from .ops import (
    adaptive_avg_pool2d,
    add,
    avg_pool2d,
    broadcast_to,
    concat,
    conv2d,
    conv3d,
    log_softmax,
    matmul,
    mean,
    mul,
    narrow,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    stack_rows,
    sub,
    sum_,
    tanh,
    transpose,
)
from .tensor import (
    NumericError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
)

__all__ = [
    "AdamState",
    "GradCheckReport",
    "NumericError",
    "Parameters",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "active_tape",
    "adam_step",
    "adaptive_avg_pool2d",
    "add",
    "as_tensor",
    "avg_pool2d",
    "backward",
    "broadcast_to",
    "concat",
    "conv2d",
    "conv3d",
    "grad_check",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
    "stack_rows",
    "sub",
    "sum_",
    "tanh",
    "transpose",
]
