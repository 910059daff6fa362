"""Minimal float64 tensor core with reverse-mode differentiation."""
from . import checkpoint, kernels, ops
from .conv import conv2d
from .errors import (BackwardError, CheckpointFormatError, DegenerateVectorError,
                     DiffcoreError, GradcheckError, ShapeError)
from .gradcheck import gradcheck
from .ops import (EPS, add, bias_add, concat, cosine_similarity, cross_entropy, div, dropout,
                  getitem, l2_normalize_scale, linear, matmul, maxpool2x2, mean, mul,
                  pair_relu_sum, relu, reshape, slice_axis, sqrt, sub, sum, transpose)
from .tensor import Node, Tensor, as_tensor, backward, is_grad_enabled, no_grad

__all__ = [
    "BackwardError", "CheckpointFormatError", "DegenerateVectorError", "DiffcoreError",
    "EPS", "GradcheckError", "Node", "ShapeError", "Tensor", "add", "as_tensor", "backward",
    "bias_add", "checkpoint", "concat", "conv2d", "cosine_similarity", "cross_entropy", "div",
    "dropout", "getitem", "gradcheck", "is_grad_enabled", "kernels", "l2_normalize_scale",
    "linear", "matmul", "maxpool2x2", "mean", "mul", "no_grad", "ops", "pair_relu_sum", "relu",
    "reshape", "slice_axis", "sqrt", "sub", "sum", "transpose",
]
