"""Cross-domain triplet mining with within-batch hardest negatives."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffcore import EPS, DegenerateVectorError, Tensor

NIR = "NIR"
VIS = "VIS"
DOMAINS = (NIR, VIS)


class NoTripletsWarning(UserWarning):
    """A batch yielded no valid cross-domain triplet."""


@dataclass
class LabeledBatch:
    embeddings: np.ndarray
    identity: Sequence[int]
    domain: Sequence[str]

    def __post_init__(self):
        if isinstance(self.embeddings, Tensor):
            self.embeddings = self.embeddings.data
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        b = len(self.embeddings)
        if len(self.identity) != b or len(self.domain) != b:
            raise ValueError(f"batch fields disagree: {b} embeddings, {len(self.identity)} "
                             f"identities, {len(self.domain)} domains")
        bad = set(self.domain) - set(DOMAINS)
        if bad:
            raise ValueError(f"unknown domain label(s) {sorted(bad)}")


@dataclass
class TripletBatch:
    triples: list[tuple[int, int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.triples)

    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        arr = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        return arr[:, 0], arr[:, 1], arr[:, 2]


def cosine_matrix(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= EPS):
        raise DegenerateVectorError(f"zero-norm embedding at row {int(np.argmin(norms))}")
    u = x / norms[:, None]
    return np.clip(u @ u.T, -1.0, 1.0)


def mine_triplets(batch: LabeledBatch, rng_seed, hardest_positive: bool = False) -> TripletBatch:
    """One triple per usable anchor, in anchor index order.

    The positive is drawn uniformly from same-identity samples of the other
    domain (or taken as the least similar one with ``hardest_positive``); the
    negative is the most similar other-identity sample of the other domain,
    lowest index on ties.
    """
    ids = np.asarray(batch.identity)
    dom = np.asarray(batch.domain)
    rng = np.random.default_rng(rng_seed)
    sim = cosine_matrix(batch.embeddings) if len(ids) else np.zeros((0, 0))
    triples = []
    for a in range(len(ids)):
        other = dom != dom[a]
        pos = np.flatnonzero(other & (ids == ids[a]))
        neg = np.flatnonzero(other & (ids != ids[a]))
        if pos.size == 0 or neg.size == 0:
            continue
        if hardest_positive:
            p = int(pos[np.argmin(sim[a, pos])])
        else:
            p = int(pos[rng.integers(pos.size)])
        n = int(neg[np.argmax(sim[a, neg])])
        triples.append((a, p, n))
    if not triples:
        warnings.warn("batch has no valid cross-domain triplet", NoTripletsWarning, stacklevel=2)
    return TripletBatch(triples)
