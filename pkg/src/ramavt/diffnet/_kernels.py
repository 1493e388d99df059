"""im2col / col2im kernels for the NHWC fast path.

Plain numpy: the gather is an as_strided window copy, the scatter loops over
kernel offsets with vectorized strided adds (channel runs stay contiguous).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col_nhwc(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, ho, wo, kh, kw, c),
        strides=(s0, s1 * stride, s2 * stride, s1, s2, s3),
        writeable=False,
    )
    cols = np.ascontiguousarray(windows).reshape(n * ho * wo, kh * kw * c)
    return cols, ho, wo


def col2im_nhwc(dcols: np.ndarray, xshape: tuple, kh: int, kw: int, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    n, h, w, c = xshape
    dx = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=dcols.dtype)
    d6 = dcols.reshape(n, ho, wo, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += d6[:, :, :, i, j, :]
    if pad:
        dx = np.ascontiguousarray(dx[:, pad : pad + h, pad : pad + w, :])
    return dx
