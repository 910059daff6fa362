"""2-D cross-correlation via im2col."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, as_tensor, record


def conv2d(x, kernel, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate ``x`` ``[H, W, Cin]`` (or ``[B, H, W, Cin]``) with
    ``kernel`` ``[k, k, Cin, Cout]``. Zero padding on both spatial sides."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride must be >= 1 and pad >= 0, got {stride}, {pad}")
    single = x.ndim == 3
    if x.ndim not in (3, 4) or kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1] \
            or x.shape[-1] != kernel.shape[2]:
        raise ShapeError("conv2d", x.shape, kernel.shape)
    xd = x.data[None] if single else x.data
    b, h, w, cin = xd.shape
    k, cout = kernel.shape[0], kernel.shape[3]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv2d", x.shape, kernel.shape,
                         detail=f"non-positive output size {ho}x{wo}")
    xp = np.pad(xd, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else xd
    # [b, ho, wo, cin, k, k] -> [b, ho, wo, k, k, cin]
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b * ho * wo, k * k * cin)
    kmat = kernel.data.reshape(k * k * cin, cout)
    out = (cols @ kmat).reshape(b, ho, wo, cout)

    def vjp(g):
        g2 = g.reshape(b * ho * wo, cout)
        gk = (cols.T @ g2).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ kmat.T).reshape(b, ho, wo, k, k, cin)
            gxp = np.zeros(xp.shape)
            for di in range(k):
                for dj in range(k):
                    gxp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :] += gcols[:, :, :, di, dj, :]
            gx = gxp[:, pad:pad + h, pad:pad + w, :] if pad else gxp
            gx = gx[0] if single else gx
        return gx, gk
    return record("conv2d", out[0] if single else out, (x, kernel), vjp)
