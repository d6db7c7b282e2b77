"""Network kernels: convolutions, affine maps, masked attention, norms.

Convolutions take a leading batch axis (``[B, C, L]`` / ``[B, C, H, W]``);
unbatched inputs are accepted and returned unbatched.  Every kernel reports
the multiply-accumulates it performs to the active MAC counter.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from .counters import tally
from .tensor import Tensor, as_tensor, make_op

PaddingSpec = "int | tuple[int, int]"


def _pair(padding) -> tuple[int, int]:
    if isinstance(padding, (int, np.integer)):
        return int(padding), int(padding)
    left, right = padding
    return int(left), int(right)


def conv1d_out_len(length: int, kernel: int, stride: int = 1, padding=0, dilation: int = 1) -> int:
    left, right = _pair(padding)
    return (length + left + right - dilation * (kernel - 1) - 1) // stride + 1


def conv1d_transposed_out_len(length: int, kernel: int, stride: int = 1, padding=0,
                              dilation: int = 1) -> int:
    left, right = _pair(padding)
    return (length - 1) * stride + dilation * (kernel - 1) + 1 - left - right


def _batched(x: Tensor, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim - 1:
        return x.data[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")
    return x.data, False


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding=0, dilation: int = 1) -> Tensor:
    """Cross-correlation along the last axis.

    ``x`` is ``[B, C_in, L]``, ``weight`` is ``[C_out, C_in, K]``.  ``padding``
    is zero padding per side, or an explicit ``(left, right)`` pair.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    xd, squeeze = _batched(x, 3)
    if stride < 1 or dilation < 1:
        raise ConfigError("conv1d: stride and dilation must be >= 1")
    n_batch, c_in, length = xd.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d: input channels (axis -2) = {c_in} but weight in-channels (axis 1) = {c_in_w}")
    left, right = _pair(padding)
    span = dilation * (k - 1) + 1
    if length + left + right < span:
        raise ShapeError(f"conv1d: padded length {length + left + right} shorter than kernel extent {span}")
    l_out = (length + left + right - span) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right)))
    last = stride * (l_out - 1) + 1
    cols = np.stack([xp[:, :, j * dilation: j * dilation + last: stride] for j in range(k)], axis=2)
    cols = cols.reshape(n_batch, c_in * k, l_out)
    w2 = weight.data.reshape(c_out, c_in * k)
    out = np.matmul(w2, cols)
    if bias is not None:
        out = out + bias.data[:, None]
    tally("conv1d", n_batch * c_out * c_in * k * l_out)

    def backward(g):
        if squeeze:
            g = g[None]
        gx = gw = gb = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g).reshape(n_batch, c_in, k, l_out)
            dxp = np.zeros_like(xp)
            for j in range(k):
                dxp[:, :, j * dilation: j * dilation + last: stride] += dcols[:, :, j]
            gx = dxp[:, :, left: left + length]
            if squeeze:
                gx = gx[0]
        if weight.requires_grad:
            gw = np.einsum("bol,bjl->oj", g, cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out[0] if squeeze else out, parents, backward)


def conv1d_transposed(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                      padding=0, dilation: int = 1) -> Tensor:
    """Adjoint of :func:`conv1d`; ``weight`` is ``[C_in, C_out, K]``.

    ``padding`` crops the full-length result, so
    ``L_out = (L_in - 1) * stride + dilation * (K - 1) + 1 - left - right``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    xd, squeeze = _batched(x, 3)
    n_batch, c_in, length = xd.shape
    c_in_w, c_out, k = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d_transposed: input channels (axis -2) = {c_in} but weight axis 0 = {c_in_w}")
    left, right = _pair(padding)
    full = (length - 1) * stride + dilation * (k - 1) + 1
    l_out = full - left - right
    if l_out < 1:
        raise ShapeError(f"conv1d_transposed: cropping {left}+{right} leaves no output")
    last = stride * (length - 1) + 1
    w2 = weight.data.reshape(c_in, c_out * k)
    cols = np.matmul(w2.T, xd).reshape(n_batch, c_out, k, length)
    yfull = np.zeros((n_batch, c_out, full), dtype=cols.dtype)
    for j in range(k):
        yfull[:, :, j * dilation: j * dilation + last: stride] += cols[:, :, j]
    out = yfull[:, :, left: full - right]
    if bias is not None:
        out = out + bias.data[:, None]
    tally("conv1d_transposed", n_batch * c_in * c_out * k * length)

    def backward(g):
        if squeeze:
            g = g[None]
        gfull = np.pad(g, ((0, 0), (0, 0), (left, right)))
        dcols = np.stack([gfull[:, :, j * dilation: j * dilation + last: stride] for j in range(k)], axis=2)
        dcols = dcols.reshape(n_batch, c_out * k, length)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(w2, dcols)
            if squeeze:
                gx = gx[0]
        if weight.requires_grad:
            gw = np.einsum("bil,bjl->ij", xd, dcols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out[0] if squeeze else out, parents, backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, strides=(1, 1),
           padding=((0, 0), (0, 0))) -> Tensor:
    """2-D cross-correlation; ``x`` is ``[B, C_in, H, W]``, ``weight`` ``[C_out, C_in, KH, KW]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    xd, squeeze = _batched(x, 4)
    n_batch, c_in, h, w = xd.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv2d: input channels (axis -3) = {c_in} but weight in-channels (axis 1) = {c_in_w}")
    if isinstance(strides, int):
        strides = (strides, strides)
    sh, sw = strides
    if isinstance(padding, int):
        padding = ((padding, padding), (padding, padding))
    (pt, pb), (pl, pr) = _pair(padding[0]), _pair(padding[1])
    if h + pt + pb < kh or w + pl + pr < kw:
        raise ShapeError("conv2d: padded input smaller than kernel")
    h_out = (h + pt + pb - kh) // sh + 1
    w_out = (w + pl + pr - kw) // sw + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    lh, lw = sh * (h_out - 1) + 1, sw * (w_out - 1) + 1
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    cols = np.stack([xp[:, :, i: i + lh: sh, j: j + lw: sw] for i, j in taps], axis=2)
    cols = cols.reshape(n_batch, c_in * kh * kw, h_out * w_out)
    w2 = weight.data.reshape(c_out, c_in * kh * kw)
    out = np.matmul(w2, cols).reshape(n_batch, c_out, h_out, w_out)
    if bias is not None:
        out = out + bias.data[:, None, None]
    tally("conv2d", n_batch * c_out * c_in * kh * kw * h_out * w_out)

    def backward(g):
        if squeeze:
            g = g[None]
        g2 = g.reshape(n_batch, c_out, h_out * w_out)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2).reshape(n_batch, c_in, kh * kw, h_out, w_out)
            dxp = np.zeros_like(xp)
            for t, (i, j) in enumerate(taps):
                dxp[:, :, i: i + lh: sh, j: j + lw: sw] += dcols[:, :, t]
            gx = dxp[:, :, pt: pt + h, pl: pl + w]
            if squeeze:
                gx = gx[0]
        if weight.requires_grad:
            gw = np.einsum("bop,bjp->oj", g2, cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out[0] if squeeze else out, parents, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map on the trailing axis; ``weight`` is ``[D_out, D_in]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeError(f"linear: trailing axis is {x.shape[-1]}, weight expects D_in={d_in}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    positions = x.data.size // d_in
    tally("linear", positions * d_in * d_out)

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = gb = None
        if weight.requires_grad:
            gw = g.reshape(-1, d_out).T @ x.data.reshape(-1, d_in)
        if bias is not None and bias.requires_grad:
            gb = g.reshape(-1, d_out).sum(axis=0)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out, parents, backward)


def _axis_shape(ndim: int, axis: int, size: int) -> tuple[int, ...]:
    shape = [1] * ndim
    shape[axis] = size
    return tuple(shape)


def layer_norm(x: Tensor, gain: Tensor | None, shift: Tensor | None, axis: int = -1,
               eps: float = 1e-5) -> Tensor:
    """Normalize along one axis; ``gain``/``shift`` have that axis' length."""
    x = as_tensor(x)
    axis = axis % x.ndim
    n = x.shape[axis]
    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    bshape = _axis_shape(x.ndim, axis, n)
    gvec = gain.data.reshape(bshape) if gain is not None else 1.0
    out = xhat * gvec
    if shift is not None:
        out = out + shift.data.reshape(bshape)
    other = tuple(a for a in range(x.ndim) if a != axis)

    def backward(g):
        dxhat = g * gvec
        gx = None
        if x.requires_grad:
            s1 = dxhat.sum(axis=axis, keepdims=True)
            s2 = (dxhat * xhat).sum(axis=axis, keepdims=True)
            gx = inv_std * (dxhat - s1 / n - xhat * s2 / n)
        grads = [gx]
        if gain is not None:
            grads.append((g * xhat).sum(axis=other) if gain.requires_grad else None)
        if shift is not None:
            grads.append(g.sum(axis=other) if shift.requires_grad else None)
        return grads

    parents = tuple(p for p in (x, gain, shift) if p is not None)
    return make_op(out, parents, backward)


def prelu(x: Tensor, slope: Tensor, axis: int = 1) -> Tensor:
    """Parametric ReLU; ``slope`` is a scalar or one value per entry of ``axis``."""
    x, slope = as_tensor(x), as_tensor(slope)
    if slope.ndim == 0:
        a = slope.data
    else:
        a = slope.data.reshape(_axis_shape(x.ndim, axis % x.ndim, slope.shape[0]))
    pos = x.data > 0
    out = np.where(pos, x.data, a * x.data)

    def backward(g):
        gx = np.where(pos, g, a * g) if x.requires_grad else None
        gs = None
        if slope.requires_grad:
            contrib = np.where(pos, 0.0, g * x.data)
            if slope.ndim == 0:
                gs = np.asarray(contrib.sum())
            else:
                ax = axis % x.ndim
                gs = contrib.sum(axis=tuple(i for i in range(x.ndim) if i != ax))
        return gx, gs

    return make_op(out, (x, slope), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return make_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when ``train`` is false."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.dtype)
    return make_op(x.data * keep, (x,), lambda g: (g * keep,))


# -- masked attention --------------------------------------------------------

class _PairIndex:
    """CSR-style listing of the attended (query, key) pairs of a mask."""

    def __init__(self, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise ShapeError(f"attention mask must be square, got {mask.shape}")
        per_row = mask.sum(axis=1)
        if np.any(per_row == 0):
            bad = np.flatnonzero(per_row == 0).tolist()
            raise ConfigError(f"attention mask rows {bad} attend nothing (degenerate softmax)")
        self.size = mask.shape[0]
        self.rows, self.cols = np.nonzero(mask)
        self.pairs = len(self.rows)
        self.row_starts = np.concatenate([[0], np.cumsum(per_row)[:-1]])
        order = np.argsort(self.cols, kind="stable")
        self.col_order = order
        present, first = np.unique(self.cols[order], return_index=True)
        self.col_present = present
        self.col_starts = first

    def sum_rows(self, x: np.ndarray, axis: int) -> np.ndarray:
        return np.add.reduceat(x, self.row_starts, axis=axis)

    def sum_cols(self, x: np.ndarray, axis: int) -> np.ndarray:
        axis = axis % x.ndim
        shape = list(x.shape)
        shape[axis] = self.size
        out = np.zeros(shape, dtype=x.dtype)
        red = np.add.reduceat(np.take(x, self.col_order, axis=axis), self.col_starts, axis=axis)
        index = [slice(None)] * x.ndim
        index[axis] = self.col_present
        out[tuple(index)] = red
        return out


def _mask_array(mask) -> np.ndarray:
    return np.asarray(getattr(mask, "matrix", mask), dtype=bool)


def attention_pairs(mask) -> int:
    return int(_mask_array(mask).sum())


def masked_multihead_attention(q: Tensor, k: Tensor, v: Tensor, heads: int, mask,
                               return_weights: bool = False):
    """Scaled dot-product attention restricted to the pairs a boolean mask allows.

    Inputs are ``[..., L, d]``; leading axes are independent batches (frames).
    Only attended pairs are ever scored, so masked pairs carry exactly zero
    weight and cost nothing.  With ``return_weights`` a dense
    ``[..., heads, L, L]`` weight array is returned alongside the output.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if not (q.shape == k.shape == v.shape):
        raise ShapeError(f"attention operands differ: {q.shape}, {k.shape}, {v.shape}")
    *lead, length, d = q.shape
    if heads < 1 or d % heads:
        raise ConfigError(f"embedding dim {d} is not divisible by {heads} heads")
    idx = _PairIndex(_mask_array(mask))
    if idx.size != length:
        raise ShapeError(f"mask is {idx.size}x{idx.size} but sequence length is {length}")
    dk = d // heads
    scale = 1.0 / math.sqrt(dk)
    rows, cols = idx.rows, idx.cols

    def split(a):
        return np.moveaxis(a.reshape(*lead, length, heads, dk), -2, -3)

    def merge(a):
        return np.moveaxis(a, -3, -2).reshape(*lead, length, d)

    qh, kh, vh = split(q.data), split(k.data), split(v.data)
    qg, kg, vg = qh[..., rows, :], kh[..., cols, :], vh[..., cols, :]
    scores = np.einsum("...pk,...pk->...p", qg, kg) * scale
    peak = np.maximum.reduceat(scores, idx.row_starts, axis=-1)
    expd = np.exp(scores - peak[..., rows])
    weights = expd / idx.sum_rows(expd, axis=-1)[..., rows]
    out_h = idx.sum_rows(weights[..., None] * vg, axis=-2)
    batch = int(np.prod(lead)) if lead else 1
    tally("attn_qk", batch * idx.pairs * d)
    tally("attn_av", batch * idx.pairs * d)

    def backward(g):
        gg = split(g)[..., rows, :]
        dweights = np.einsum("...pk,...pk->...p", gg, vg)
        dv = idx.sum_cols(weights[..., None] * gg, axis=-2)
        dscores = weights * (dweights - idx.sum_rows(weights * dweights, axis=-1)[..., rows]) * scale
        dq = idx.sum_rows(dscores[..., None] * kg, axis=-2)
        dk_ = idx.sum_cols(dscores[..., None] * qg, axis=-2)
        return merge(dq), merge(dk_), merge(dv)

    out = make_op(merge(out_h), (q, k, v), backward)
    if not return_weights:
        return out
    dense = np.zeros((*lead, heads, length, length), dtype=weights.dtype)
    dense[..., rows, cols] = weights
    return out, dense
