"""Finite-difference gradient suites at tiny sizes, grouped by scope.

Each case reduces its op output to a scalar through a fixed random
weighting, so every output element carries a distinct upstream gradient.
"""
from __future__ import annotations

import time
from typing import Callable, NamedTuple

import numpy as np

from . import backbone as bb
from . import diffcore as dc
from . import losses
from . import relation as rel
from .diffcore import Tensor, gradcheck

SCOPES = ("ops", "relation", "losses", "end2end")
TOLERANCE = 1e-4


class CaseResult(NamedTuple):
    scope: str
    name: str
    error: float


def _t(rng, *shape, low=None):
    data = rng.normal(size=shape)
    if low is not None:
        # keep away from zero, e.g. for division and square roots
        data = np.sign(data) * (np.abs(data) + low)
    return Tensor(data, requires_grad=True)


def _weighted(out: Tensor, seed: int = 99) -> Tensor:
    w = np.random.default_rng(seed).normal(size=out.shape)
    return dc.sum(dc.mul(out, Tensor(w)))


def _check(fn: Callable[[], Tensor], tensors) -> float:
    return gradcheck(lambda: _weighted(fn()), tensors)


def ops_cases(seed: int = 0):
    rng = np.random.default_rng(seed)
    a, b = _t(rng, 3, 4), _t(rng, 3, 4)
    d = _t(rng, 3, 4, low=0.5)
    bias = _t(rng, 4)
    w = _t(rng, 4, 5)
    batch = _t(rng, 2, 3, 4)
    pos = Tensor(np.abs(rng.normal(size=(3, 4))) + 0.5, requires_grad=True)
    img = _t(rng, 2, 4, 4, 2)
    kern = _t(rng, 3, 3, 2, 3)
    kern2 = _t(rng, 2, 2, 2, 1)
    labels = np.array([0, 3, 1])
    left, right, pb = _t(rng, 2, 3, 4), _t(rng, 2, 3, 4), _t(rng, 4)
    return {
        "add": (lambda: dc.add(a, b), [a, b]),
        "add_broadcast": (lambda: dc.add(a, bias), [a, bias]),
        "sub": (lambda: dc.sub(a, b), [a, b]),
        "mul": (lambda: dc.mul(a, b), [a, b]),
        "div": (lambda: dc.div(a, d), [a, d]),
        "bias_add": (lambda: dc.bias_add(a, bias), [a, bias]),
        "relu": (lambda: dc.relu(a), [a]),
        "sqrt": (lambda: dc.sqrt(pos), [pos]),
        "matmul": (lambda: dc.matmul(a, w), [a, w]),
        "matmul_batched": (lambda: dc.matmul(batch, w), [batch, w]),
        "linear": (lambda: dc.linear(a, w, Tensor(np.arange(5.0))), [a, w]),
        "concat": (lambda: dc.concat([a, b], axis=0), [a, b]),
        "getitem": (lambda: dc.getitem(a, (np.array([0, 2, 2]), slice(1, 3))), [a]),
        "slice_axis": (lambda: dc.slice_axis(a, 1, 1, 3), [a]),
        "reshape": (lambda: dc.reshape(a, (2, 6)), [a]),
        "transpose": (lambda: dc.transpose(batch, (2, 0, 1)), [batch]),
        "sum": (lambda: dc.sum(batch, axis=1, keepdims=True), [batch]),
        "mean": (lambda: dc.mean(batch, axis=(0, 2)), [batch]),
        "maxpool2x2": (lambda: dc.maxpool2x2(img), [img]),
        "dropout": (lambda: dc.dropout(a, 0.5, True, 5), [a]),
        "l2_normalize_scale": (lambda: dc.l2_normalize_scale(a, 3.0), [a]),
        "cosine_similarity": (lambda: dc.cosine_similarity(a, b), [a, b]),
        "cross_entropy": (lambda: dc.cross_entropy(a, labels), [a]),
        "conv2d_same": (lambda: dc.conv2d(img, kern, 1, 1), [img, kern]),
        "conv2d_stride2": (lambda: dc.conv2d(img, kern2, 2, 0), [img, kern2]),
        "pair_relu_sum": (lambda: dc.pair_relu_sum(left, right, pb), [left, right, pb]),
        "pair_relu_sum_noself": (lambda: dc.pair_relu_sum(left, right, pb, False),
                                 [left, right, pb]),
    }


def _tiny_relation(**kw) -> rel.RelationConfig:
    return rel.RelationConfig(**{"N": 2, "C": 3, "L": 4, "embed_dim": 5, "g_hidden": 6, **kw})


def relation_cases(seed: int = 0):
    cases = {}
    for coords in (True, False):
        for pooling in ("sum", "mean"):
            cfg = _tiny_relation(use_coords=coords, pooling=pooling)
            rng = np.random.default_rng(seed)
            params = rel.init_params(cfg, seed)
            # several images: at N=2 the +-1 coordinate sums of one image's active
            # pairs can cancel, leaving an exactly-zero gradient that FD noise swamps
            fmap = _t(rng, 4, cfg.N, cfg.N, cfg.C)
            tag = f"{'coords' if coords else 'nocoords'}_{pooling}"
            cases[f"relation_forward_{tag}"] = (
                lambda fmap=fmap, cfg=cfg, params=params: rel.relation_forward(fmap, cfg, params),
                [fmap, *params.values()])
    cfg = _tiny_relation()
    params = rel.init_params(cfg, seed + 1)
    fmap = _t(np.random.default_rng(seed + 1), 4, cfg.N, cfg.N, cfg.C)
    cases["relation_forward_explicit"] = (
        lambda: rel.relation_forward_explicit(fmap, cfg, params), [fmap, *params.values()])
    return cases


def losses_cases(seed: int = 0):
    rng = np.random.default_rng(seed)
    emb = _t(rng, 4, 5)
    head = losses.SoftmaxHead.init(3, 5, seed, scale=4.0)
    labels = np.array([0, 2, 1, 2])
    a, p, n = _t(rng, 3, 5), _t(rng, 3, 5), _t(rng, 3, 5)
    hw = [emb, head.weight, head.bias]
    return {
        "softmax_loss": (lambda: losses.softmax_loss(emb, labels, head), hw),
        "softmax_loss_dropout": (
            lambda: losses.softmax_loss(emb, labels, head, True, 0.3, np.random.default_rng(3)), hw),
        "triplet_loss_euclid": (lambda: losses.triplet_loss_euclid(a, p, n, 3.0), [a, p, n]),
        "similarity_ratio": (lambda: losses.similarity_ratio(a, p, n), [a, p, n]),
        "conditional_triplet_loss": (
            lambda: losses.conditional_triplet_loss(a, p, n, 0.7), [a, p, n]),
        "total_loss": (
            lambda: losses.total_loss(losses.softmax_loss(emb, labels, head),
                                      losses.conditional_triplet_loss(a, p, n, 0.7), 10.0),
            [emb, *head.params().values(), a, p, n]),
    }


def _widest_gap_midpoints(values: np.ndarray) -> np.ndarray:
    """Per column, the midpoint of the widest gap between sorted values in
    the central half."""
    v = np.sort(values, axis=0)
    lo, hi = len(v) // 4, 3 * len(v) // 4
    gaps = v[lo + 1:hi + 1] - v[lo:hi]
    k = lo + np.argmax(gaps, axis=0)
    cols = np.arange(v.shape[1])
    return (v[k, cols] + v[k + 1, cols]) / 2


def end2end_cases(seed: int = 0):
    """Backbone on 8x8 inputs, relation head at N=2, C=3, softmax plus
    conditional triplet on fixed triples."""
    bcfg = bb.BackboneConfig(input_size=8, channels=(2, 3), output_grid=2, output_channels=3)
    rcfg = _tiny_relation()
    ss = np.random.SeedSequence(seed).spawn(3)
    params = {**bb.init_params(bcfg, ss[0]), **rel.init_params(rcfg, ss[1])}
    head = losses.SoftmaxHead.init(2, rcfg.embed_dim, ss[2], scale=4.0)
    params.update(head.params())
    rng = np.random.default_rng(seed)
    images = Tensor(rng.uniform(0, 1, size=(4, 8, 8, 1)), requires_grad=True)
    labels = np.array([0, 0, 1, 1])
    anchor, positive, negative = np.array([0, 2]), np.array([1, 3]), np.array([3, 1])

    # Move to a generic point: put each pair unit's threshold in the widest
    # gap among its central pre-activations, so it is active on part of the
    # pairs and no pair sits near the relu kink. A unit active on every pair
    # has an exactly zero gradient on the centred coordinate rows, which
    # central differences can only resolve to rounding noise.
    with dc.no_grad():
        cells, _ = rel._cells(bb.backbone_forward(images, bcfg, params), rcfg)
        w1, d = params["relation.g.0.kernel"].data, rcfg.cell_width
        top, bottom = cells.data @ w1[:d], cells.data @ w1[d:]
        i, j = rel.pair_indices(rcfg.K)
        pre = np.concatenate([top[:, i] + bottom[:, j], top[:, j] + bottom[:, i]], axis=1)
        params["relation.g.0.bias"].data[:] = -_widest_gap_midpoints(pre.reshape(-1, pre.shape[-1]))

    def loss():
        emb = rel.relation_forward(bb.backbone_forward(images, bcfg, params), rcfg, params)
        sm = losses.softmax_loss(emb, labels, head)
        trip = losses.conditional_triplet_loss(emb[anchor], emb[positive], emb[negative], 0.7)
        return losses.total_loss(sm, trip, 10.0)
    return {"end2end_total_loss": (loss, [images, *params.values()])}


_BUILDERS = {"ops": ops_cases, "relation": relation_cases, "losses": losses_cases,
             "end2end": end2end_cases}


def run_scope(scope: str, seed: int = 0) -> list[CaseResult]:
    if scope not in _BUILDERS:
        raise ValueError(f"unknown scope {scope!r}; choose from {SCOPES}")
    out = []
    for name, (fn, tensors) in _BUILDERS[scope](seed).items():
        # end2end already reduces to the scalar training loss
        err = gradcheck(fn, tensors) if scope == "end2end" else _check(fn, tensors)
        out.append(CaseResult(scope, name, err))
    return out


def run(scopes=SCOPES, seed: int = 0) -> dict:
    """Worst error per scope plus the failing cases."""
    report = {}
    for scope in scopes:
        start = time.perf_counter()
        results = run_scope(scope, seed)
        worst = max(results, key=lambda r: r.error)
        report[scope] = {"worst_error": worst.error, "worst_case": worst.name,
                         "cases": len(results), "seconds": time.perf_counter() - start,
                         "failed": [r.name for r in results if not r.error < TOLERANCE]}
    return report
