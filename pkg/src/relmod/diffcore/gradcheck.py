"""Central-difference gradient checking."""
from __future__ import annotations

import logging
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import GradcheckError
from .tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)

# one-sided slopes that disagree by more than this flag a kink (relu at 0,
# hinge boundary, max-pool tie); such elements are not compared
KINK_TOL = 1e-3


def _scalar(value: Tensor, where: str) -> float:
    v = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(v):
        raise GradcheckError(f"non-finite function value {v} {where}")
    return v


def gradcheck(f: Callable[..., Tensor], x: Union[Tensor, Sequence[Tensor], Mapping[str, Tensor]],
              h: float = 1e-5, skip_kinks: bool = True) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``x`` may be a single tensor, in which case ``f(x)`` is called, or a
    sequence/mapping of tensors that ``f()`` closes over. The relative error
    per element is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)``.
    """
    if isinstance(x, Tensor):
        tensors = [x]
        call = lambda: f(x)  # noqa: E731
    else:
        tensors = list(x.values()) if isinstance(x, Mapping) else list(x)
        call = f
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    try:
        out = call()
        f0 = _scalar(out, "at the base point")
        backward(out)
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
        worst = 0.0
        skipped = 0
        with no_grad():
            for t, g_ad in zip(tensors, analytic):
                flat = t.data.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + h
                    fp = _scalar(call(), f"at +h on element {i}")
                    flat[i] = orig - h
                    fm = _scalar(call(), f"at -h on element {i}")
                    flat[i] = orig
                    if skip_kinks:
                        right, left = (fp - f0) / h, (f0 - fm) / h
                        if abs(right - left) > KINK_TOL * max(abs(right), abs(left), 1.0):
                            skipped += 1
                            continue
                    g_fd = (fp - fm) / (2 * h)
                    ga = g_ad.reshape(-1)[i]
                    err = abs(ga - g_fd) / max(abs(ga), abs(g_fd), 1e-8)
                    worst = max(worst, err)
        if skipped:
            log.debug("gradcheck skipped %d element(s) at non-differentiable points", skipped)
        return worst
    finally:
        for t, rg in zip(tensors, saved):
            t.requires_grad = rg
            t.grad = None
