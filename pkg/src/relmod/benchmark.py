"""Frozen synthetic benchmark: the ablation ladder and the margin comparison.

Every rung trains on the default dataset (seed 7, 40 identities, 20 samples
per domain, domain gap 0.5) with the shared :data:`BENCH_TRAIN` schedule and
differs from its neighbour by one component.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dataset import flatten_splits, generate, group_splits, split_protocol
from .evaluation import rank_k, similarity_matrix
from .model import init_params
from .trainer import evaluate_checkpoint, split_compactness, train

# Adam with a short geometric decay; the default SGD schedule is too slow
# for a CPU-sized run, and dropout on a 20-way head only added variance.
BENCH_TRAIN = {"epochs": 30, "optimizer": "adam", "lr_start": 3e-3, "lr_end": 3e-4,
               "dropout_p": 0.0}

RUNGS = {
    "gap": {"train": {"arch": "baseline", "loss_mode": "softmax_only"}},
    "relation": {"relation": {"use_coords": False}, "train": {"loss_mode": "softmax_only"}},
    "coords": {"train": {"loss_mode": "softmax_only"}},
    "conditional": {"train": {"loss_mode": "softmax_plus_conditional"}},
    "plain": {"train": {"loss_mode": "softmax_plus_plain_triplet"}},
}
LADDER = ("gap", "relation", "coords", "conditional")
SEEDS = (0, 1, 2)


def rung_config(name: str, seed: int) -> RunConfig:
    doc = {"train": dict(BENCH_TRAIN, seed=seed)}
    for section, fields in RUNGS[name].items():
        doc.setdefault(section, {}).update(fields)
    return RunConfig().replace(**doc)


def benchmark_samples():
    cfg = RunConfig()
    return flatten_splits(split_protocol(generate(cfg.data), cfg.data.seed))


def raw_pixel_rank1(samples) -> float:
    """Rank-1 of mean-centred raw pixels, a floor any learned model should clear."""
    groups = group_splits(samples)
    vec = lambda group: np.stack([s.image.ravel() - s.image.mean() for s in group])
    sim = similarity_matrix(vec(groups["probe"]), vec(groups["gallery"]),
                            [s.identity for s in groups["probe"]],
                            [s.identity for s in groups["gallery"]])
    return rank_k(sim)


@dataclass
class RungResult:
    name: str
    rank1: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    compactness: list[dict] = field(default_factory=list)

    @property
    def median(self) -> float:
        return float(np.median(self.rank1))


def run_rung(name: str, samples, seeds=SEEDS, compactness: bool = False) -> RungResult:
    """Train one rung per seed.

    With ``compactness`` also record, per run, the cross-domain compactness
    of the epoch-0 and trained models as ``{"raw": (start, end), "centred": (start, end)}``.
    Only training and evaluation count toward ``seconds``.
    """
    out = RungResult(name)
    for seed in seeds:
        cfg = rung_config(name, seed)
        t0 = time.perf_counter()
        ckpt, _ = train(cfg, samples)
        out.rank1.append(evaluate_checkpoint(ckpt, samples).rank1)
        out.seconds.append(time.perf_counter() - t0)
        if compactness:
            # same seed stream the trainer uses, so this is the epoch-0 model
            start = init_params(cfg, np.random.SeedSequence(seed).spawn(5)[0])
            out.compactness.append({
                kind: (split_compactness(start, cfg, samples, centred),
                       split_compactness(ckpt, cfg, samples, centred))
                for kind, centred in (("raw", False), ("centred", True))})
    return out
