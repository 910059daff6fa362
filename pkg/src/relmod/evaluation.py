"""Identification and verification metrics over a probe x gallery cosine
similarity matrix, and embedding export."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .diffcore import EPS, DegenerateVectorError

FARS = (1e-2, 1e-3, 1e-4)


@dataclass
class SimilarityMatrix:
    values: np.ndarray  # [num_probe, num_gallery]
    probe_ids: np.ndarray
    gallery_ids: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.probe_ids = np.asarray(self.probe_ids)
        self.gallery_ids = np.asarray(self.gallery_ids)
        if self.values.shape != (len(self.probe_ids), len(self.gallery_ids)):
            raise ValueError(f"similarity shape {self.values.shape} does not match "
                             f"{len(self.probe_ids)} probes x {len(self.gallery_ids)} gallery")

    def genuine_mask(self) -> np.ndarray:
        return self.probe_ids[:, None] == self.gallery_ids[None, :]


@dataclass
class EvalReport:
    rank1: float
    vr_at_far: dict = field(default_factory=dict)
    num_genuine: int = 0
    num_impostor: int = 0

    def to_json(self) -> dict:
        """The four headline metrics, keyed for the command-line output."""
        return {"rank1": self.rank1,
                "vr_far_1e2": self.vr_at_far[1e-2],
                "vr_far_1e3": self.vr_at_far[1e-3],
                "vr_far_1e4": self.vr_at_far[1e-4]}


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms <= EPS)
    if bad.size:
        raise DegenerateVectorError(f"{what} embedding {int(bad[0])} has zero norm")
    return x / norms[:, None]


def similarity_matrix(probe_emb, gallery_emb, probe_ids=None, gallery_ids=None) -> SimilarityMatrix:
    probe_emb = np.asarray(probe_emb, dtype=np.float64)
    gallery_emb = np.asarray(gallery_emb, dtype=np.float64)
    if probe_emb.ndim != 2 or gallery_emb.ndim != 2 or probe_emb.shape[1] != gallery_emb.shape[1]:
        raise ValueError(f"embedding dims differ: {probe_emb.shape} vs {gallery_emb.shape}")
    values = np.clip(_unit_rows(probe_emb, "probe") @ _unit_rows(gallery_emb, "gallery").T, -1.0, 1.0)
    if probe_ids is None:
        probe_ids = np.arange(len(probe_emb))
    if gallery_ids is None:
        gallery_ids = np.arange(len(gallery_emb))
    return SimilarityMatrix(values, probe_ids, gallery_ids)


def true_match_ranks(sim: SimilarityMatrix) -> np.ndarray:
    """0-based rank of the best true-identity gallery entry for each probe.

    Gallery entries are ordered by descending similarity, ties by index.
    """
    genuine = sim.genuine_mask()
    missing = np.flatnonzero(~genuine.any(axis=1))
    if missing.size:
        raise ValueError(f"probe identity {sim.probe_ids[missing[0]]!r} is absent from the gallery")
    order = np.argsort(-sim.values, axis=1, kind="stable")
    hits = np.take_along_axis(genuine, order, axis=1)
    return hits.argmax(axis=1)


def rank_k(sim: SimilarityMatrix, k: int = 1) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(np.mean(true_match_ranks(sim) < k))


def vr_at_far(sim: SimilarityMatrix, far: float) -> float:
    """Verification rate at the threshold achieving false accept rate ``far``.

    The threshold is the smallest impostor score ``t`` with
    ``mean(impostor >= t) <= far``; scores ``>= t`` are accepted. If no
    impostor score qualifies, only genuine scores above every impostor pass.
    """
    if not 0.0 < far < 1.0:
        raise ValueError("far must be in (0, 1)")
    mask = sim.genuine_mask()
    genuine = sim.values[mask]
    impostor = sim.values[~mask]
    if genuine.size == 0:
        raise ValueError("no genuine pairs")
    if impostor.size == 0:
        raise ValueError("no impostor pairs")
    return _vr_from_scores(genuine, impostor, far)


def _vr_from_scores(genuine: np.ndarray, impostor: np.ndarray, far: float) -> float:
    imp = np.sort(impostor)
    cand = np.unique(imp)
    # impostors at or above each candidate threshold
    at_or_above = imp.size - np.searchsorted(imp, cand, side="left")
    ok = np.flatnonzero(at_or_above <= far * imp.size)
    if ok.size:
        return float(np.mean(genuine >= cand[ok[0]]))
    return float(np.mean(genuine > imp[-1]))


def evaluate(sim: SimilarityMatrix, fars: Sequence[float] = FARS) -> EvalReport:
    mask = sim.genuine_mask()
    return EvalReport(rank1=rank_k(sim, 1),
                      vr_at_far={f: vr_at_far(sim, f) for f in fars},
                      num_genuine=int(mask.sum()), num_impostor=int((~mask).sum()))


def cross_domain_compactness(embeddings, identity, domain, center: bool = False) -> float:
    """Mean cosine similarity over same-identity NIR/VIS pairs.

    With ``center=True`` the mean embedding of the set is removed first.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if center:
        x = x - x.mean(axis=0, keepdims=True)
    u = _unit_rows(x, "compactness")
    ids, dom = np.asarray(identity), np.asarray(domain)
    nir, vis = dom == "NIR", dom == "VIS"
    sims = u[nir] @ u[vis].T
    same = ids[nir][:, None] == ids[vis][None, :]
    if not same.any():
        raise ValueError("no same-identity cross-domain pairs")
    return float(sims[same].mean())


# --- export -----------------------------------------------------------------------------

def pca_2d(x, iters: int = 500, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-2 principal axes by power iteration with deflation.

    Returns ``(projected [n, 2], components [2, D], eigenvalues [2])``.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(len(x) - 1, 1)
    d = cov.shape[0]
    comps, vals = [], []
    work = cov.copy()
    for k in range(min(2, d)):
        v = np.ones(d) / np.sqrt(d) + 1e-3 * np.arange(d) / d
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = work @ v
            n = np.linalg.norm(w)
            if n <= EPS:
                break
            w /= n
            new_lam = float(w @ work @ w)
            if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0) and np.linalg.norm(w - v) < 1e-10:
                v, lam = w, new_lam
                break
            v, lam = w, new_lam
        # fix sign for determinism: largest-magnitude coordinate positive
        v = v * np.sign(v[np.argmax(np.abs(v))] or 1.0)
        comps.append(v)
        vals.append(lam)
        work = work - lam * np.outer(v, v)
    while len(comps) < 2:
        comps.append(np.zeros(d))
        vals.append(0.0)
    comps = np.asarray(comps)
    return centered @ comps.T, comps, np.asarray(vals)


def _write_rows(path: Path, ids, domains, rows: np.ndarray, prefix: str = "e") -> None:
    header = ",".join(["identity", "domain"] + [f"{prefix}{k}" for k in range(rows.shape[1])])
    lines = [header]
    for ident, dom, row in zip(ids, domains, rows):
        lines.append(",".join([str(int(ident)), dom] + [repr(float(v)) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def pca_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".pca" + (p.suffix or ".csv"))


def export_embeddings(embeddings, ids, domains, path) -> tuple[Path, Path]:
    """Write ``identity,domain,e0..`` rows plus a 2-D PCA companion file."""
    x = np.asarray(embeddings, dtype=np.float64)
    if not (len(x) == len(ids) == len(domains)):
        raise ValueError("embeddings, ids and domains must have equal length")
    path = Path(path)
    _write_rows(path, ids, domains, x)
    proj, _, _ = pca_2d(x)
    companion = pca_path(path)
    _write_rows(companion, ids, domains, proj)
    return path, companion


def read_embeddings(path) -> tuple[np.ndarray, list[int], list[str]]:
    lines = Path(path).read_text().splitlines()
    ids, doms, rows = [], [], []
    for line in lines[1:]:
        parts = line.split(",")
        ids.append(int(parts[0]))
        doms.append(parts[1])
        rows.append([float(v) for v in parts[2:]])
    width = len(lines[0].split(",")) - 2 if lines else 0
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), width), ids, doms
