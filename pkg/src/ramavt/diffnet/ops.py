"""Differentiable primitives: conv, batchnorm, dense, LSTM cell, activations.

Every op takes and returns :class:`Tensor`, runs its forward math in numpy,
and registers a backward closure on the active tape.  Backward closures
receive the gradient of the loss w.r.t. the op output and accumulate into the
operand gradient buffers.  Convolution is implemented as im2col plus a BLAS
matmul; its input gradient is rebuilt with a per-kernel-offset strided add,
which keeps the scatter fully vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, record, wrap


class DegenerateVarianceError(ValueError):
    """Batch statistics were requested over a single element."""


class EmptySequenceError(ValueError):
    """Attention was applied to a sequence with zero token positions."""


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = wrap(a.data + b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return record(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = wrap(a.data - b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(-_unbroadcast(g, b.shape))

    return record(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = wrap(a.data * b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return record(out, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    out = wrap(a.data * a.dtype.type(s))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * a.dtype.type(s))

    return record(out, (a,), bw)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = wrap(a.data.reshape(shape))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.shape))

    return record(out, (a,), bw)


def transpose_last2(a: Tensor) -> Tensor:
    out = wrap(np.swapaxes(a.data, -1, -2))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.swapaxes(g, -1, -2))

    return record(out, (a,), bw)


def slice0(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice along axis 0."""
    out = wrap(a.data[start:stop])

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            a.accumulate_grad(full)

    return record(out, (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    out = wrap(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return record(out, tuple(tensors), bw)


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    out = wrap(a.data.sum(dtype=a.dtype))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.shape).astype(a.dtype))

    return record(out, (a,), bw)


def mean(a: Tensor, axis: int) -> Tensor:
    out = wrap(a.data.mean(axis=axis, dtype=a.dtype))
    n = a.shape[axis]

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    return record(out, (a,), bw)


def global_avg_pool(a: Tensor) -> Tensor:
    """Per-channel spatial mean: [N,C,H,W] -> [N,C]."""
    if a.data.ndim != 4:
        raise ShapeError(f"global_avg_pool expects [N,C,H,W], got {a.shape}")
    n, c, h, w = a.shape
    out = wrap(a.data.mean(axis=(2, 3), dtype=a.dtype))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g[:, :, None, None] / (h * w), a.shape).astype(a.dtype))

    return record(out, (a,), bw)


# ---------------------------------------------------------------------------
# matrix products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = wrap(a.data @ b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            ga = a.data.reshape(-1, a.shape[-1])
            b.accumulate_grad(ga.T @ g.reshape(-1, g.shape[-1]))

    return record(out, (a, b), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Stacked matrix product over leading batch axes."""
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"bmm: {a.shape} @ {b.shape}")
    out = wrap(np.matmul(a.data, b.data))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b.accumulate_grad(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return record(out, (a, b), bw)


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map x @ weight + bias for x of shape [N, D]."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense: input dim {x.shape[-1]} does not match weight rows {weight.shape[0]}")
    y = x.data @ weight.data
    if bias is not None:
        y = y + bias.data
    out = wrap(y)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data.T)
        if weight.requires_grad:
            xf = x.data.reshape(-1, x.shape[-1])
            weight.accumulate_grad(xf.T @ g.reshape(-1, g.shape[-1]))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return record(out, (x, weight, bias), bw)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    out = wrap(np.maximum(a.data, 0))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return record(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so exp never overflows
    x = a.data
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = wrap(s.astype(a.dtype, copy=False))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * out.data * (1.0 - out.data))

    return record(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = wrap(np.tanh(a.data))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out.data * out.data))

    return record(out, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``; slices sum to 1."""
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = wrap(s.astype(a.dtype, copy=False))

    def bw(g):
        if a.requires_grad:
            inner = (g * out.data).sum(axis=axis, keepdims=True)
            a.accumulate_grad(out.data * (g - inner))

    return record(out, (a,), bw)


def elementwise(a: Tensor, kind: str) -> Tensor:
    """Dispatch relu | sigmoid | tanh by name."""
    try:
        return {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}[kind](a)
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None


# ---------------------------------------------------------------------------
# convolution


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, c, ho, wo, kh, kw),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
        writeable=False,
    )
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def _col2im(dcols: np.ndarray, xshape: tuple, kh: int, kw: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    n, c, h, w = xshape
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, :, i, j]
    if pad:
        dx = dx[:, :, pad : pad + h, pad : pad + w]
    return dx


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor], stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [N,C,H,W] with [F,C,kH,kW] kernels."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    f, ck, kh, kw = kernel.shape
    if c != ck:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {ck}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"conv2d: padded input {h + 2 * padding}x{w + 2 * padding} smaller than kernel {kh}x{kw}")

    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    wmat = kernel.data.reshape(f, c * kh * kw)
    y = cols @ wmat.T
    if bias is not None:
        y += bias.data
    out = wrap(np.ascontiguousarray(y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)))

    def bw(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
        if kernel.requires_grad:
            kernel.accumulate_grad((gmat.T @ cols).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(gmat.sum(axis=0))
        if x.requires_grad:
            dcols = gmat @ wmat
            x.accumulate_grad(_col2im(dcols, x.shape, kh, kw, stride, padding, ho, wo))

    return record(out, (x, kernel, bias), bw)


# ---------------------------------------------------------------------------
# fused NHWC conv block (internal fast path)
#
# The public conv2d/batchnorm2d/relu primitives above define the contract in
# the spec's NCHW layout.  The network trunk instead runs this fused op in
# NHWC, where the batchnorm reduction is a plain column reduction of the
# im2col matmul output and no layout transposes are needed between layers.
# A test asserts the two paths agree.


def permute(a: Tensor, axes: tuple) -> Tensor:
    inverse = tuple(int(i) for i in np.argsort(axes))
    out = wrap(np.ascontiguousarray(a.data.transpose(axes)))

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.ascontiguousarray(g.transpose(inverse)))

    return record(out, (a,), bw)


from ._kernels import col2im_nhwc as _col2im_nhwc
from ._kernels import im2col_nhwc as _im2col_nhwc


def fused_conv_bn_relu(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    stride: int,
    padding: int,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """relu(batchnorm(conv(x))) on NHWC input, as a single tape node.

    Matches conv2d + batchnorm2d + relu exactly (same statistics, same
    running-buffer updates); kernel stays in the [F,C,kH,kW] layout.
    """
    from .tensor import active_tape

    n, h, w, c = x.shape
    f, _, kh, kw = kernel.shape
    cols, ho, wo = _im2col_nhwc(x.data, kh, kw, stride, padding)
    wmat = np.ascontiguousarray(kernel.data.transpose(2, 3, 1, 0)).reshape(kh * kw * c, f)
    y = cols @ wmat
    y += bias.data
    rows = y.shape[0]
    if training:
        if rows < 2:
            raise DegenerateVarianceError("train-mode batchnorm needs at least 2 elements per channel")
        mu = y.mean(axis=0)
        var = y.var(axis=0)
        running_mean.data[:] = (1.0 - momentum) * running_mean.data + momentum * mu
        running_var.data[:] = (1.0 - momentum) * running_var.data + momentum * (var * rows / (rows - 1))
        invstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
        xhat = y
        xhat -= mu
        xhat *= invstd
        z = gamma.data * xhat
        z += beta.data
    else:
        invstd = 1.0 / np.sqrt(running_var.data + x.dtype.type(eps))
        xhat = None
        z = (gamma.data * invstd) * y
        z += beta.data - gamma.data * invstd * running_mean.data
    mask = z > 0
    np.multiply(z, mask, out=z)
    out = wrap(z.reshape(n, ho, wo, f))

    recording = active_tape() is not None and (
        x.requires_grad or kernel.requires_grad or gamma.requires_grad or beta.requires_grad or bias.requires_grad)
    if not recording:
        return out

    def bw(g):
        # g is this node's exclusive buffer once its backward runs; mutate in place
        gz = np.ascontiguousarray(g).reshape(rows, f)
        np.multiply(gz, mask, out=gz)
        if training:
            if gamma.requires_grad:
                gamma.accumulate_grad((gz * xhat).sum(axis=0))
            if beta.requires_grad:
                beta.accumulate_grad(gz.sum(axis=0))
            gy = gz
            gy -= gz.mean(axis=0)
            # xhat columns are zero-mean, so the shifted gz gives the same
            # second moment as the original
            gy -= xhat * (gy * xhat).mean(axis=0)
            gy *= gamma.data * invstd
        else:
            if gamma.requires_grad:
                gamma.accumulate_grad((gz * ((cols @ wmat + bias.data - running_mean.data) * invstd)).sum(axis=0))
            if beta.requires_grad:
                beta.accumulate_grad(gz.sum(axis=0))
            gy = gz * (gamma.data * invstd)
        if bias.requires_grad:
            bias.accumulate_grad(gy.sum(axis=0))
        if kernel.requires_grad:
            dwmat = cols.T @ gy
            kernel.accumulate_grad(np.ascontiguousarray(dwmat.reshape(kh, kw, c, f).transpose(3, 2, 0, 1)))
        if x.requires_grad:
            dcols = gy @ wmat.T
            x.accumulate_grad(_col2im_nhwc(dcols, x.shape, kh, kw, stride, padding, ho, wo))

    return record(out, (x, kernel, bias, gamma, beta), bw)


# ---------------------------------------------------------------------------
# batch normalization


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (N, H, W).

    Train mode normalizes with batch statistics and folds them into the
    running buffers (biased mean, unbiased variance).  Eval mode reads the
    running buffers and never mutates them.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm2d: gamma/beta must have shape ({c},)")
    axes = (0, 2, 3)
    m = n * h * w
    if training:
        if m < 2:
            raise DegenerateVarianceError("train-mode batchnorm needs at least 2 elements per channel")
        mu = x.data.mean(axis=axes, dtype=x.dtype)
        var = x.data.var(axis=axes, dtype=x.dtype)
        running_mean.data[:] = (1.0 - momentum) * running_mean.data + momentum * mu
        running_var.data[:] = (1.0 - momentum) * running_var.data + momentum * (var * m / (m - 1))
    else:
        mu = running_mean.data
        var = running_var.data
    invstd = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = (x.data - mu[None, :, None, None]) * invstd[None, :, None, None]
    out = wrap((gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]).astype(x.dtype, copy=False))

    def bw(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=axes))
        if x.requires_grad:
            gi = gamma.data[None, :, None, None] * invstd[None, :, None, None]
            if training:
                gmean = g.mean(axis=axes, keepdims=True)
                gxhat = (g * xhat).mean(axis=axes, keepdims=True)
                x.accumulate_grad(gi * (g - gmean - xhat * gxhat))
            else:
                x.accumulate_grad(gi * g)

    return record(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------------------
# LSTM cell


GATES = ("i", "f", "g", "o")


@dataclass
class LSTMParams:
    """Four gate weight/bias sets: input, forget, candidate, output.

    ``w_x[gate]`` maps the input [D,S], ``w_h[gate]`` the hidden state [S,S],
    ``b[gate]`` is the gate bias [S].
    """

    w_x: dict
    w_h: dict
    b: dict

    def tensors(self) -> dict:
        out = {}
        for gate in GATES:
            out[f"{gate}.wx"] = self.w_x[gate]
            out[f"{gate}.wh"] = self.w_h[gate]
            out[f"{gate}.b"] = self.b[gate]
        return out


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: LSTMParams):
    """One LSTM recurrence: sigmoid gates, tanh candidate.

    Returns (h', c').  Built from primitives, so gradients flow through
    chained steps without any dedicated backward code.
    """
    if h.shape != c.shape:
        raise ShapeError(f"lstm_step: h {h.shape} and c {c.shape} must be congruent")
    pre = {
        gate: add(dense(x, params.w_x[gate], params.b[gate]), matmul(h, params.w_h[gate]))
        for gate in GATES
    }
    gi = sigmoid(pre["i"])
    gf = sigmoid(pre["f"])
    gg = tanh(pre["g"])
    go = sigmoid(pre["o"])
    c2 = add(mul(gf, c), mul(gi, gg))
    h2 = mul(go, tanh(c2))
    return h2, c2
