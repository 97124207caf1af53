"""Minimal reverse-mode autodiff engine over float64 numpy arrays."""

from .core import (
    Tensor,
    abs_,
    add,
    as_tensor,
    clamp,
    concat,
    div,
    exp,
    is_grad_enabled,
    leaky_relu,
    log,
    make_op,
    mean,
    mul,
    neg,
    no_grad,
    pow,
    relu,
    reshape,
    softplus,
    sqrt,
    sub,
    sum_,
)
from ._alloc import keep_freed_memory
from .gradcheck import check_gradients, numerical_grad, relative_error
from .ops import conv2d, dropout, instance_norm, maxpool2d, upsample_bilinear2x

__all__ = [
    "Tensor", "abs_", "add", "as_tensor", "clamp", "concat", "div", "exp", "is_grad_enabled",
    "leaky_relu", "log", "make_op", "mean", "mul", "neg", "no_grad", "pow", "relu", "reshape",
    "softplus", "sqrt", "sub", "sum_", "check_gradients", "numerical_grad", "relative_error", "conv2d",
    "dropout", "instance_norm", "maxpool2d", "upsample_bilinear2x", "keep_freed_memory",
]

keep_freed_memory()
