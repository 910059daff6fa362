"""Pure numpy implementation of the pairwise relation kernel."""
import numpy as np


def pair_relu_sum(left, right, bias, include_self=True):
    """Return ``(out, cnt_left, cnt_right)`` for ``sum_{i<=j} relu(l_i + r_j + b)``.

    ``cnt_left[t, i, h]`` counts the active pairs whose left member is ``i``;
    ``cnt_right`` likewise for the right member. They are the exact
    derivatives of ``out`` with respect to ``left`` and ``right``.
    """
    t, k, h = left.shape
    out = np.zeros((t, h))
    cnt_left = np.zeros((t, k, h))
    cnt_right = np.zeros((t, k, h))
    shifted = right + bias
    for i in range(k):
        start = i if include_self else i + 1
        if start >= k:
            continue
        pre = left[:, i:i + 1, :] + shifted[:, start:, :]
        active = pre > 0
        out += np.where(active, pre, 0.0).sum(axis=1)
        cnt_left[:, i, :] = active.sum(axis=1)
        cnt_right[:, start:, :] += active
    return out, cnt_left, cnt_right
