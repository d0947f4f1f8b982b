"""Tensor substrate: autodiff tape, seeded RNG, FSTN files, optimizers."""

from .core import (
    Tensor,
    add,
    clamp,
    conv2d,
    div,
    grad_enabled,
    grid_dot,
    leaky_relu,
    linear,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    ones,
    relu,
    reshape,
    sigmoid,
    sub,
    tensor,
    tmean,
    tsum,
    zeros,
)
from .gradcheck import grad_check
from .io import load_tensor, save_tensor, tensor_bytes, tensor_from_bytes
from .optim import AdamW, CosineSchedule
from .rng import Rng

__all__ = [
    "Tensor",
    "add",
    "clamp",
    "conv2d",
    "div",
    "grad_enabled",
    "grad_check",
    "grid_dot",
    "leaky_relu",
    "linear",
    "log",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "ones",
    "relu",
    "reshape",
    "sigmoid",
    "sub",
    "tensor",
    "tmean",
    "tsum",
    "zeros",
    "AdamW",
    "CosineSchedule",
    "Rng",
    "load_tensor",
    "save_tensor",
    "tensor_bytes",
    "tensor_from_bytes",
]
