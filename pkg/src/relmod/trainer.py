"""Training loop, checkpoints and checkpoint evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from . import losses
from .config import RunConfig, from_dict
from .dataset import Sample, group_splits, images_of
from .diffcore import Tensor, checkpoint
from .evaluation import EvalReport, cross_domain_compactness, evaluate, similarity_matrix
from .model import embed, embed_numpy, init_params
from .optim import make_optimizer
from .sampler import NIR, VIS, LabeledBatch, NoTripletsWarning, mine_triplets

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite value."""


class CompatibilityError(ValueError):
    """Checkpoint and model configuration disagree."""


@dataclass
class Checkpoint:
    config: RunConfig
    params: dict[str, np.ndarray]
    optim_state: dict[str, np.ndarray] = field(default_factory=dict)
    optim_steps: int = 0
    epoch: int = 0

    @property
    def config_hash(self) -> str:
        return self.config.digest()

    def to_bytes(self) -> bytes:
        meta = {"config": self.config.to_dict(), "config_hash": self.config_hash,
                "epoch": self.epoch, "optim_steps": self.optim_steps}
        return checkpoint.dumps({**self.params, **self.optim_state}, meta)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, meta = checkpoint.load(path)
        try:
            cfg = from_dict(meta["config"])
            stored_hash = meta["config_hash"]
        except (KeyError, ValueError) as exc:
            raise CompatibilityError(f"checkpoint carries no usable config: {exc}") from None
        if cfg.digest() != stored_hash:
            raise CompatibilityError(f"config hash mismatch: stored {stored_hash[:12]}, "
                                     f"recomputed {cfg.digest()[:12]}")
        params = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
        optim = {k: v for k, v in tensors.items() if k.startswith("optim.")}
        return cls(cfg, params, optim, int(meta.get("optim_steps", 0)), int(meta.get("epoch", 0)))


def _check_finite(named) -> None:
    for name, arr in named:
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite values first seen in {name}")


class _BatchSampler:
    """P identities x Q samples per domain, drawn without replacement where possible."""

    def __init__(self, samples: list[Sample], cfg, rng: np.random.Generator):
        self.rng = rng
        self.cfg = cfg
        self.pools: dict[int, dict[str, np.ndarray]] = {}
        for k, s in enumerate(samples):
            self.pools.setdefault(s.identity, {NIR: [], VIS: []})[s.domain].append(k)
        usable = [i for i, p in self.pools.items() if p[NIR] and p[VIS]]
        if len(usable) < 2:
            raise ValueError("training split needs >= 2 identities with both domains")
        self.ids = np.array(sorted(usable))

    def draw(self) -> np.ndarray:
        p = min(self.cfg.batch_identities, len(self.ids))
        q = self.cfg.batch_per_domain
        picked = self.rng.choice(self.ids, size=p, replace=False)
        out = []
        for ident in picked:
            for dom in (NIR, VIS):
                pool = self.pools[int(ident)][dom]
                out.extend(self.rng.choice(pool, size=q, replace=len(pool) < q).tolist())
        return np.asarray(out)


def train(cfg: RunConfig, samples: list[Sample], log_path=None, epoch_callback=None):
    """Optimise backbone, embedding head and softmax classifier on the train split.

    Returns ``(Checkpoint, metrics)`` where ``metrics`` holds one dict per
    epoch. ``epoch_callback(epoch, params)`` runs after each epoch.
    """
    tc, mc = cfg.train, cfg.loss
    train_set = [s for s in samples if s.split in (None, "train")]
    if not train_set:
        raise ValueError("dataset has no train split")
    images = images_of(train_set)
    _check_finite([("train images", images)])
    ident = np.array([s.identity for s in train_set])
    domain = np.array([s.domain for s in train_set])
    classes = {c: k for k, c in enumerate(sorted(set(ident.tolist())))}
    labels = np.array([classes[c] for c in ident])

    seeds = np.random.SeedSequence(tc.seed).spawn(5)
    params = init_params(cfg, seeds[0])
    head = losses.SoftmaxHead.init(len(classes), cfg.relation.embed_dim, seeds[1], mc.softmax_scale)
    params.update(head.params())
    batches = _BatchSampler(train_set, tc, np.random.default_rng(seeds[2]))
    drop_rng = np.random.default_rng(seeds[3])
    mine_rng = np.random.default_rng(seeds[4])
    opt = make_optimizer(tc.optimizer, params, tc.momentum)
    steps = tc.steps_per_epoch or int(np.ceil(len(train_set) / tc.batch_size))

    metrics = []
    log_fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(tc.epochs):
            lr = tc.lr_at(epoch)
            acc = {"loss_total": [], "loss_softmax": [], "loss_triplet": [], "mean_sp": [], "mean_sn": []}
            for _ in range(steps):
                idx = batches.draw()
                emb = embed(images[idx], cfg, params, train=True)
                sm = losses.softmax_loss(emb, labels[idx], head, True, tc.dropout_p, drop_rng)
                trip = Tensor(0.0)
                if tc.loss_mode != "softmax_only":
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", NoTripletsWarning)
                        tb = mine_triplets(LabeledBatch(emb.data, ident[idx], domain[idx]),
                                           int(mine_rng.integers(2**63)), tc.hardest_positive)
                    if len(tb):
                        a, p, n = tb.columns()
                        ea, ep, en = emb[a], emb[p], emb[n]
                        with dc.no_grad():
                            acc["mean_sp"].append(float(dc.cosine_similarity(ea, ep).data.mean()))
                            acc["mean_sn"].append(float(dc.cosine_similarity(ea, en).data.mean()))
                        if tc.loss_mode == "softmax_plus_conditional":
                            trip = losses.conditional_triplet_loss(ea, ep, en, mc.conditional_margin,
                                                                   mc.ratio_epsilon)
                        else:
                            unit = [dc.l2_normalize_scale(t, 1.0) for t in (ea, ep, en)]
                            trip = losses.triplet_loss_euclid(*unit, mc.plain_triplet_margin)
                total = losses.total_loss(sm, trip, mc.lam)
                _check_finite([("embeddings", emb.data), ("loss_softmax", sm.data),
                               ("loss_triplet", trip.data), ("loss_total", total.data)])
                for p_ in params.values():
                    p_.grad = None
                dc.backward(total)
                _check_finite((f"grad[{k}]", p_.grad) for k, p_ in params.items() if p_.grad is not None)
                opt.step(lr)
                acc["loss_total"].append(total.item())
                acc["loss_softmax"].append(sm.item())
                acc["loss_triplet"].append(trip.item())
            record = {"epoch": epoch,
                      **{k: (float(np.mean(v)) if v else 0.0) for k, v in acc.items()},
                      "lr": lr}
            metrics.append(record)
            log.info("epoch %d: %s", epoch, record)
            if log_fh:
                log_fh.write(json.dumps(record, sort_keys=False) + "\n")
                log_fh.flush()
            if epoch_callback is not None:
                epoch_callback(epoch, params)
    finally:
        if log_fh:
            log_fh.close()

    ckpt = Checkpoint(cfg, {k: p.data.copy() for k, p in params.items()},
                      {k: v.copy() for k, v in opt.state().items()}, opt.steps, tc.epochs)
    return ckpt, metrics


def model_params(ckpt: Checkpoint) -> dict[str, Tensor]:
    """Rebuild model tensors, checking names and shapes against the config."""
    expected = init_params(ckpt.config, 0)
    missing = set(expected) - set(ckpt.params)
    if missing:
        raise CompatibilityError(f"checkpoint lacks parameter(s) {sorted(missing)}")
    out = {}
    for k, t in expected.items():
        if ckpt.params[k].shape != t.shape:
            raise CompatibilityError(f"{k}: checkpoint shape {ckpt.params[k].shape} != model {t.shape}")
        out[k] = Tensor(ckpt.params[k])
    return out


def embed_samples(ckpt: Checkpoint, samples: list[Sample]) -> np.ndarray:
    return embed_numpy(images_of(samples), ckpt.config, model_params(ckpt))


def evaluate_checkpoint(ckpt: Checkpoint, samples: list[Sample], expected_hash: str | None = None,
                        gallery_is_probe: bool = False) -> EvalReport:
    """Embed gallery and probe in eval mode and score them.

    ``gallery_is_probe`` matches the gallery against itself (debug mode).
    """
    if expected_hash is not None and expected_hash != ckpt.config_hash:
        raise CompatibilityError(f"config hash mismatch: checkpoint {ckpt.config_hash[:12]}, "
                                 f"expected {expected_hash[:12]}")
    groups = group_splits(samples)
    gallery = groups["gallery"]
    probe = gallery if gallery_is_probe else groups["probe"]
    if not gallery or not probe:
        raise ValueError("dataset needs gallery and probe splits")
    g_emb = embed_samples(ckpt, gallery)
    p_emb = g_emb if gallery_is_probe else embed_samples(ckpt, probe)
    sim = similarity_matrix(p_emb, g_emb, [s.identity for s in probe], [s.identity for s in gallery])
    return evaluate(sim)


def split_compactness(ckpt_or_params, cfg: RunConfig, samples: list[Sample], center: bool = False) -> float:
    """Mean same-identity NIR/VIS cosine over the gallery and probe samples."""
    test = [s for s in samples if s.split in ("gallery", "probe")]
    params = (model_params(ckpt_or_params) if isinstance(ckpt_or_params, Checkpoint)
              else ckpt_or_params)
    emb = embed_numpy(images_of(test), cfg, params)
    return cross_domain_compactness(emb, [s.identity for s in test], [s.domain for s in test], center)
