"""Minimal reverse-mode autodiff engine on numpy arrays."""

from avasr.autodiff.gradcheck import check_gradient
from avasr.autodiff.kernels import backend_name, use_backend
from avasr.autodiff.tensor import (
    Tensor,
    accumulate_grad,
    add,
    backward,
    clear_grads,
    concat,
    conv1d,
    custom_node,
    depthwise_conv1d,
    gather_rows,
    layer_norm,
    log_softmax,
    logsumexp,
    lstm,
    matmul,
    mean_all,
    mul,
    primitive_forward,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    stack_scalars,
    sum_all,
    swapaxes,
    tanh,
)

__all__ = [
    "Tensor",
    "accumulate_grad",
    "add",
    "backend_name",
    "backward",
    "check_gradient",
    "clear_grads",
    "concat",
    "conv1d",
    "custom_node",
    "depthwise_conv1d",
    "gather_rows",
    "layer_norm",
    "log_softmax",
    "logsumexp",
    "lstm",
    "matmul",
    "mean_all",
    "mul",
    "primitive_forward",
    "relu",
    "reshape",
    "sigmoid",
    "slice_",
    "softmax",
    "stack_scalars",
    "sum_all",
    "swapaxes",
    "tanh",
    "use_backend",
]
