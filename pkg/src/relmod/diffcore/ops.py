"""Differentiable primitives.

All functions take and return :class:`Tensor`; plain numbers and arrays are
promoted to constant tensors. Broadcasting follows numpy rules.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateVectorError, ShapeError
from .tensor import Tensor, as_tensor, record

EPS = 1e-12


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return record("mul", a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape),
                             _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    """Elementwise quotient; the denominator must stay clear of zero."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(np.abs(b.data) <= EPS):
        raise DegenerateVectorError("div: denominator within 1e-12 of zero")
    out = a.data / b.data

    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))
    return record("div", out, (a, b), vjp)


def bias_add(x, b) -> Tensor:
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError("bias_add", x.shape, b.shape, detail="bias must match last axis")
    return add(x, b)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    # maximum keeps NaN visible downstream; where(mask, ...) would zero it
    return record("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DegenerateVectorError("sqrt: argument must be positive")
    out = np.sqrt(x.data)
    return record("sqrt", out, (x,), lambda g: (g / (2.0 * out),))


# --- linear algebra ----------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching; ``b`` may be a shared 2-D weight."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return (None if ga is None else _unbroadcast(ga, a.shape), gb)
    return record("matmul", out, (a, b), vjp)


def linear(x, kernel, bias=None) -> Tensor:
    y = matmul(x, kernel)
    return y if bias is None else bias_add(y, bias)


# --- structural ----------------------------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", detail="no inputs")
    ax = axis % ts[0].ndim
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, t.shape, detail=f"axis={axis}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))
    return record("concat", np.concatenate([t.data for t in ts], axis=ax), ts, vjp)


def getitem(x, index) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    x = as_tensor(x)
    try:
        out = x.data[index]
    except IndexError as exc:
        raise ShapeError("getitem", x.shape, detail=str(exc)) from None

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)
    return record("getitem", np.array(out, dtype=np.float64), (x,), vjp)


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    ax = axis % x.ndim
    if not 0 <= start <= stop <= x.shape[ax]:
        raise ShapeError("slice", x.shape, detail=f"[{start}:{stop}] on axis {axis}")
    index = (slice(None),) * ax + (slice(start, stop),)

    def vjp(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)
    return record("slice", x.data[index].copy(), (x,), vjp)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return record("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                  lambda g: (g.transpose(inv),))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return record("sum", np.asarray(out), (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# --- pooling / regularisation --------------------------------------------------------

def maxpool2x2(x) -> Tensor:
    """2x2 stride-2 max pool over ``[..., H, W, C]``; ties go to the first
    window element in row-major order."""
    x = as_tensor(x)
    if x.ndim < 3 or x.shape[-3] % 2 or x.shape[-2] % 2:
        raise ShapeError("maxpool2x2", x.shape, detail="needs [..., even H, even W, C]")
    *lead, h, w, c = x.shape
    win = x.data.reshape(*lead, h // 2, 2, w // 2, 2, c)
    nl = len(lead)
    # -> [..., h/2, w/2, c, 4] in row-major window order
    perm = tuple(range(nl)) + (nl, nl + 2, nl + 4, nl + 1, nl + 3)
    win = win.transpose(perm).reshape(*lead, h // 2, w // 2, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gw = np.zeros(win.shape)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gw = gw.reshape(*lead, h // 2, w // 2, c, 2, 2)
        inv = tuple(range(nl)) + (nl, nl + 3, nl + 1, nl + 4, nl + 2)
        return (gw.transpose(inv).reshape(x.shape),)
    return record("maxpool2x2", out, (x,), vjp)


def dropout(x, p: float, train: bool, rng=None) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-p); identity when not
    training. ``rng`` is a ``numpy.random.Generator`` or an integer seed."""
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return record("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# --- normalisation and similarity ---------------------------------------------------

def _norms(op: str, x: Tensor) -> np.ndarray:
    n = np.sqrt(np.einsum("...i,...i->...", x.data, x.data))
    if np.any(n <= EPS):
        bad = np.argwhere(np.atleast_1d(n) <= EPS)[0].tolist()
        raise DegenerateVectorError(f"{op}: vector norm <= 1e-12 at index {bad}")
    return n


def l2_normalize_scale(x, s: float = 1.0) -> Tensor:
    """``s * x / ||x||`` along the last axis."""
    x = as_tensor(x)
    if s <= 0:
        raise ValueError(f"l2_normalize_scale: scale must be positive, got {s}")
    n = _norms("l2_normalize_scale", x)[..., None]
    u = x.data / n

    def vjp(g):
        return (s * (g - u * np.sum(g * u, axis=-1, keepdims=True)) / n,)
    return record("l2_normalize_scale", s * u, (x,), vjp)


def cosine_similarity(a, b) -> Tensor:
    """Cosine similarity along the last axis (batched)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("cosine_similarity", a.shape, b.shape)
    na = _norms("cosine_similarity", a)[..., None]
    nb = _norms("cosine_similarity", b)[..., None]
    ua, ub = a.data / na, b.data / nb
    cos = np.sum(ua * ub, axis=-1, keepdims=True)
    out = np.clip(cos[..., 0], -1.0, 1.0)

    def vjp(g):
        g = g[..., None]
        return (g * (ub - cos * ua) / na, g * (ua - cos * ub) / nb)
    return record("cosine_similarity", out, (a, b), vjp)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy", logits.shape, labels.shape)
    m = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise ValueError(f"cross_entropy: labels must lie in [0, {m})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    out = -logp[rows, labels].mean()

    def vjp(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (g * d / len(labels),)
    return record("cross_entropy", np.asarray(out), (logits,), vjp)


# --- fused relation kernel -----------------------------------------------------------

def pair_relu_sum(left, right, bias, include_self: bool = True) -> Tensor:
    """``out[t] = sum_{i<=j} relu(left[t,i] + right[t,j] + bias)``.

    ``left``/``right`` are ``[T, K, H]`` and ``bias`` is ``[H]``. With
    ``include_self=False`` the diagonal pairs ``i == j`` are skipped.
    Dispatches to the compiled kernel when available.
    """
    left, right, bias = as_tensor(left), as_tensor(right), as_tensor(bias)
    if left.ndim != 3 or left.shape != right.shape or bias.shape != (left.shape[2],):
        raise ShapeError("pair_relu_sum", left.shape, right.shape, bias.shape)
    out, cnt_left, cnt_right = kernels.pair_relu_sum(left.data, right.data, bias.data, include_self)

    def vjp(g):
        gl = g[:, None, :] * cnt_left
        gr = g[:, None, :] * cnt_right
        # every active pair contributes its bias once; active counts per row
        # are already tallied in cnt_left
        return gl, gr, gl.sum(axis=(0, 1))
    return record("pair_relu_sum", out, (left, right, bias), vjp)
