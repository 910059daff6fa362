"""Hot-kernel dispatch.

The compiled extension ``_pairs`` is used when it imports; otherwise the
numpy fallback runs. Set ``RELMOD_KERNELS=python`` to force the fallback.
"""
import os

import numpy as np

from . import _pairs_py

py_pair_relu_sum = _pairs_py.pair_relu_sum

try:
    from ._pairs import pair_relu_sum as _ext
except ImportError:  # extension not built
    _ext = None


def _ext_pair_relu_sum(left, right, bias, include_self=True):
    # typed memoryviews demand C-contiguous float64
    c = np.ascontiguousarray
    return _ext(c(left, dtype=np.float64), c(right, dtype=np.float64),
                c(bias, dtype=np.float64), include_self)


ext_pair_relu_sum = _ext_pair_relu_sum if _ext is not None else None

if ext_pair_relu_sum is not None and os.environ.get("RELMOD_KERNELS", "").lower() != "python":
    BACKEND = "cython"
    _impl = ext_pair_relu_sum
else:
    BACKEND = "python"
    _impl = py_pair_relu_sum


def pair_relu_sum(left, right, bias, include_self=True):
    return _impl(left, right, bias, include_self)
