"""Backbone plus embedding head (Relation Module or pooled baseline)."""
from __future__ import annotations

import numpy as np

from . import backbone as bb
from . import diffcore as dc
from . import relation as rel
from .diffcore import Tensor
from .diffcore.errors import ShapeError


def baseline_param_shapes(C: int, embed_dim: int) -> dict[str, tuple[int, ...]]:
    return {"baseline.f.kernel": (C, embed_dim), "baseline.f.bias": (embed_dim,)}


def init_baseline_params(C: int, embed_dim: int, seed) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    return {"baseline.f.kernel": Tensor(rng.normal(0, np.sqrt(1.0 / C), size=(C, embed_dim)),
                                        requires_grad=True),
            "baseline.f.bias": Tensor(np.zeros(embed_dim), requires_grad=True)}


def baseline_forward(fmap, params) -> Tensor:
    """Global average pool over the grid, then one linear layer."""
    x = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    kernel = params["baseline.f.kernel"]
    if x.ndim < 3 or x.shape[-1] != kernel.shape[0]:
        raise ShapeError("baseline_forward", x.shape, kernel.shape)
    lead = x.shape[:-3]
    pooled = dc.reshape(dc.mean(x, axis=(-3, -2)), (int(np.prod(lead)) if lead else 1, kernel.shape[0]))
    out = dc.linear(pooled, kernel, params["baseline.f.bias"])
    return dc.reshape(out, lead + (kernel.shape[1],))


def init_params(cfg, seed) -> dict[str, Tensor]:
    """Backbone and embedding-head parameters for a :class:`RunConfig`."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(2)
    params = bb.init_params(cfg.backbone, seeds[0])
    if cfg.train.arch == "baseline":
        params.update(init_baseline_params(cfg.relation.C, cfg.relation.embed_dim, seeds[1]))
    else:
        params.update(rel.init_params(cfg.relation, seeds[1]))
    return params


def embed(images, cfg, params, train: bool = False) -> Tensor:
    fmap = bb.backbone_forward(images, cfg.backbone, params, train)
    if cfg.train.arch == "baseline":
        return baseline_forward(fmap, params)
    return rel.relation_forward(fmap, cfg.relation, params, train)


def embed_numpy(images: np.ndarray, cfg, params, batch: int = 128) -> np.ndarray:
    """Eval-mode embeddings without recording a graph."""
    out = []
    with dc.no_grad():
        for start in range(0, len(images), batch):
            out.append(embed(images[start:start + batch], cfg, params, train=False).data)
    return np.concatenate(out) if out else np.zeros((0, cfg.relation.embed_dim))
