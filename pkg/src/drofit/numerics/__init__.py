"""Dense tensors, analytic-gradient kernels and a radix-2 FFT."""

from .counters import MacCounter, count_macs, scope, tally
from .fft import fft, ifft, irfft, rfft
from .gradcheck import grad_check
from .kernels import (
    attention_pairs,
    conv1d,
    conv1d_out_len,
    conv1d_transposed,
    conv1d_transposed_out_len,
    conv2d,
    dropout,
    layer_norm,
    linear,
    masked_multihead_attention,
    prelu,
    sigmoid,
)
from .ops import (
    add,
    clamp_min,
    concat,
    dot,
    getitem,
    log10,
    mean,
    mul,
    reshape,
    sqrt,
    square,
    sub,
    transpose,
)
from .ops import sum as tsum
from .tensor import Tensor, as_tensor, make_op

__all__ = [
    "MacCounter", "Tensor", "add", "as_tensor", "attention_pairs", "clamp_min", "concat",
    "conv1d", "conv1d_out_len", "conv1d_transposed", "conv1d_transposed_out_len", "conv2d",
    "count_macs", "dot", "dropout", "fft", "getitem", "grad_check", "ifft", "irfft",
    "layer_norm", "linear", "log10", "make_op", "masked_multihead_attention", "mean", "mul",
    "prelu", "reshape", "rfft", "scope", "sigmoid", "sqrt", "square", "sub", "tally",
    "transpose", "tsum",
]
