"""Training objectives: scaled L2-softmax, Euclidean triplet, conditional-margin
triplet and their weighted combination."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor


@dataclass(frozen=True)
class MarginConfig:
    conditional_margin: float = 0.7
    plain_triplet_margin: float = 0.2
    lam: float = 10.0
    ratio_epsilon: float = 1e-6
    softmax_scale: float = 16.0

    def __post_init__(self):
        if not 0.0 < self.conditional_margin <= 1.0:
            raise ValueError(f"conditional_margin must be in (0, 1], got {self.conditional_margin}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.softmax_scale <= 0:
            raise ValueError(f"softmax_scale must be positive, got {self.softmax_scale}")
        if self.ratio_epsilon < 0:
            raise ValueError("ratio_epsilon must be >= 0")


@dataclass
class SoftmaxHead:
    weight: Tensor  # [M, D]
    bias: Tensor  # [M]
    scale: float = 16.0

    def __post_init__(self):
        if self.weight.ndim != 2 or self.weight.shape[0] < 2:
            raise ValueError(f"softmax head needs [M >= 2, D] weights, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} classes")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, num_classes: int, dim: int, seed, scale: float = 16.0) -> "SoftmaxHead":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, np.sqrt(1.0 / dim), size=(num_classes, dim))
        return cls(Tensor(w, requires_grad=True), Tensor(np.zeros(num_classes), requires_grad=True), scale)

    def params(self) -> dict[str, Tensor]:
        return {"head.weight": self.weight, "head.bias": self.bias}


def softmax_loss(embeddings, labels, head: SoftmaxHead, train: bool = False,
                 dropout_p: float = 0.0, rng=None) -> Tensor:
    """Mean cross-entropy of the classifier on ``s * x / ||x||``.

    Dropout, when training, acts on the normalised classifier input.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= head.num_classes):
        raise ValueError(f"labels must lie in [0, {head.num_classes})")
    x = dc.l2_normalize_scale(embeddings, head.scale)
    x = dc.dropout(x, dropout_p, train, rng)
    logits = dc.bias_add(dc.matmul(x, dc.transpose(head.weight)), head.bias)
    return dc.cross_entropy(logits, labels)


def _batched(*ts):
    out = [dc.as_tensor(t) for t in ts]
    if out[0].ndim == 1:
        out = [dc.reshape(t, (1,) + t.shape) for t in out]
    return out


def triplet_loss_euclid(anchor, positive, negative, margin: float) -> Tensor:
    """``mean [ ||a-p||^2 - ||a-n||^2 + margin ]_+`` over the triplet rows."""
    a, p, n = _batched(anchor, positive, negative)
    dp = a - p
    dn = a - n
    gap = dc.sum(dp * dp, axis=-1) - dc.sum(dn * dn, axis=-1) + margin
    return dc.mean(dc.relu(gap))


def similarity_ratio(anchor, positive, negative, eps: float = 1e-6) -> Tensor:
    """``(Sn + 1) / (Sp + 1 + eps)`` per triplet, with cosine similarities."""
    a, p, n = _batched(anchor, positive, negative)
    sp = dc.cosine_similarity(a, p)
    sn = dc.cosine_similarity(a, n)
    return dc.div(sn + 1.0, sp + (1.0 + eps))


def conditional_triplet_loss(anchor, positive, negative, m: float = 0.7,
                             eps: float = 1e-6) -> Tensor:
    """``mean [ (Sn + 1) / (Sp + 1 + eps) - m ]_+``.

    Zero loss region is ``Sn + 1 <= m (Sp + 1 + eps)``, i.e. below the line
    ``Sn = m Sp + (m - 1)`` up to ``eps``.
    """
    return dc.mean(dc.relu(similarity_ratio(anchor, positive, negative, eps) - m))


def conditional_loss_from_similarities(sp: float, sn: float, m: float = 0.7,
                                       eps: float = 1e-6) -> float:
    """Scalar form of the conditional hinge for given similarities."""
    return max((sn + 1.0) / (sp + 1.0 + eps) - m, 0.0)


def total_loss(softmax_part, triplet_part, lam: float) -> Tensor:
    return dc.add(softmax_part, dc.mul(triplet_part, lam))
