"""Relation Module: coordinate channels, orderless cell pairing, shared
pair embedder, pooling and the final embedding layer.

The shared embedder is ``g(concat(v_i, v_j)) = relu([v_i, v_j] W1 + b1) W2 + b2``.
A layer on a concatenation depends on the order inside the pair, so each
unordered pair contributes ``(g([v_i, v_j]) + g([v_j, v_i])) / 2``; the pooled
sum is then invariant to any permutation of the cells.

Splitting ``W1`` into its top and bottom halves turns the first layer into
``v_i W1_top + v_j W1_bot + b1``, and because pooling is a sum, the second
layer can be applied once after pooling. The forward pass therefore only
materialises per-cell projections plus the fused pairwise kernel, run once
per member order; :func:`relation_forward_explicit` keeps the literal
concatenate-every-pair formulation for verification.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .diffcore.errors import ShapeError


@dataclass(frozen=True)
class RelationConfig:
    N: int = 8
    C: int = 32
    L: int = 64
    embed_dim: int = 256
    use_coords: bool = True
    g_hidden: int = 128
    pooling: str = "sum"
    include_self: bool = True

    def __post_init__(self):
        if self.N < 1 or self.C < 1 or self.L < 1 or self.embed_dim < 1 or self.g_hidden < 1:
            raise ValueError(f"relation dimensions must be positive: {self}")
        if self.use_coords and self.N < 2:
            raise ValueError("coordinate channels need N >= 2")
        if self.pooling not in ("sum", "mean"):
            raise ValueError(f"pooling must be 'sum' or 'mean', got {self.pooling!r}")
        if not self.include_self and self.K < 2:
            raise ValueError("excluding self-pairs needs at least two cells")

    @property
    def K(self) -> int:
        return self.N * self.N

    @property
    def P(self) -> int:
        return self.K * (self.K + 1) // 2 if self.include_self else self.K * (self.K - 1) // 2

    @property
    def cell_width(self) -> int:
        return self.C + 2 if self.use_coords else self.C

    @property
    def pair_width(self) -> int:
        return 2 * self.cell_width


class CoordChannels(NamedTuple):
    rows: np.ndarray
    cols: np.ndarray

    def stacked(self) -> np.ndarray:
        """``[N, N, 2]`` with the row channel first."""
        return np.stack([self.rows, self.cols], axis=-1)


def build_coords(N: int) -> CoordChannels:
    """Row and column position channels, linearly scaled to [-1, 1]."""
    if N < 2:
        raise ValueError(f"build_coords needs N >= 2, got {N}")
    ramp = 2.0 * np.arange(N) / (N - 1) - 1.0
    rows = np.repeat(ramp[:, None], N, axis=1)
    cols = np.repeat(ramp[None, :], N, axis=0)
    return CoordChannels(rows, cols)


def enumerate_pairs(K: int) -> list[tuple[int, int]]:
    """All unordered cell pairs ``(i, j)``, ``i <= j``, in lexicographic order."""
    if K < 1:
        raise ValueError(f"enumerate_pairs needs K >= 1, got {K}")
    return [(i, j) for i in range(K) for j in range(i, K)]


def pair_indices(K: int, include_self: bool = True) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(K, k=0 if include_self else 1)
    return i, j


def param_shapes(cfg: RelationConfig) -> dict[str, tuple[int, ...]]:
    return {
        "relation.g.0.kernel": (cfg.pair_width, cfg.g_hidden),
        "relation.g.0.bias": (cfg.g_hidden,),
        "relation.g.1.kernel": (cfg.g_hidden, cfg.L),
        "relation.g.1.bias": (cfg.L,),
        "relation.f.kernel": (cfg.L, cfg.embed_dim),
        "relation.f.bias": (cfg.embed_dim,),
    }


def init_params(cfg: RelationConfig, seed) -> dict[str, Tensor]:
    """He-normal for the layer feeding the relu, fan-in normal elsewhere; zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("bias"):
            data = np.zeros(shape)
        else:
            gain = 2.0 if name == "relation.g.0.kernel" else 1.0
            data = rng.normal(0.0, np.sqrt(gain / shape[0]), size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


def _cells(fmap, cfg: RelationConfig) -> tuple[Tensor, tuple]:
    """Flatten ``[.., N, N, C]`` to ``[T, K, C(+2)]``, appending coordinates."""
    x = fmap if isinstance(fmap, Tensor) else Tensor(fmap)
    if x.ndim < 3 or x.shape[-3:] != (cfg.N, cfg.N, cfg.C):
        raise ShapeError("relation_forward", x.shape, (cfg.N, cfg.N, cfg.C),
                         detail="feature map must be [.., N, N, C]")
    lead = x.shape[:-3]
    t = int(np.prod(lead)) if lead else 1
    cells = dc.reshape(x, (t, cfg.K, cfg.C))
    if cfg.use_coords:
        coords = build_coords(cfg.N).stacked().reshape(1, cfg.K, 2)
        cells = dc.concat([cells, Tensor(np.broadcast_to(coords, (t, cfg.K, 2)))], axis=-1)
    return cells, lead


def relation_forward(fmap, cfg: RelationConfig, params, train: bool = False) -> Tensor:
    """Embed a feature map (or a batch of them) to ``[.., embed_dim]``."""
    cells, lead = _cells(fmap, cfg)
    d = cfg.cell_width
    w1, b1 = params["relation.g.0.kernel"], params["relation.g.0.bias"]
    top = dc.matmul(cells, dc.slice_axis(w1, 0, 0, d))
    bottom = dc.matmul(cells, dc.slice_axis(w1, 0, d, 2 * d))
    both = dc.add(dc.pair_relu_sum(top, bottom, b1, cfg.include_self),
                  dc.pair_relu_sum(bottom, top, b1, cfg.include_self))
    pooled = dc.mul(both, 0.5)
    if cfg.pooling == "mean":
        rel = dc.bias_add(dc.matmul(dc.mul(pooled, 1.0 / cfg.P), params["relation.g.1.kernel"]),
                          params["relation.g.1.bias"])
    else:
        rel = dc.bias_add(dc.matmul(pooled, params["relation.g.1.kernel"]),
                          dc.mul(params["relation.g.1.bias"], float(cfg.P)))
    out = dc.linear(rel, params["relation.f.kernel"], params["relation.f.bias"])
    return dc.reshape(out, lead + (cfg.embed_dim,))


def embed_pairs(pairs, params) -> Tensor:
    """Shared embedder ``g`` on explicit concatenated pair vectors ``[.., 2D]``."""
    hidden = dc.relu(dc.linear(pairs, params["relation.g.0.kernel"], params["relation.g.0.bias"]))
    return dc.linear(hidden, params["relation.g.1.kernel"], params["relation.g.1.bias"])


def relation_forward_explicit(fmap, cfg: RelationConfig, params, train: bool = False) -> Tensor:
    """Literal formulation: concatenate every pair in both member orders,
    embed each, average the two orders, pool, project.

    Memory is ``O(P * pair_width)`` per image; meant for tests and audits.
    """
    cells, lead = _cells(fmap, cfg)
    i, j = pair_indices(cfg.K, cfg.include_self)
    first, second = dc.getitem(cells, (slice(None), i)), dc.getitem(cells, (slice(None), j))
    forward = embed_pairs(dc.concat([first, second], axis=-1), params)
    backward = embed_pairs(dc.concat([second, first], axis=-1), params)
    rel = dc.mul(dc.sum(dc.add(forward, backward), axis=1), 0.5)
    if cfg.pooling == "mean":
        rel = dc.mul(rel, 1.0 / cfg.P)
    out = dc.linear(rel, params["relation.f.kernel"], params["relation.f.bias"])
    return dc.reshape(out, lead + (cfg.embed_dim,))


def pair_gap(v, w, params) -> float:
    """Mean absolute difference between ``g([v, w])`` and ``g([w, v])``."""
    with dc.no_grad():
        fwd = embed_pairs(Tensor(np.concatenate([v, w])[None]), params).data
        rev = embed_pairs(Tensor(np.concatenate([w, v])[None]), params).data
    return float(np.abs(fwd - rev).mean())


def pair_symmetry_audit(cfg: RelationConfig, params, seed, trials: int = 32) -> dict:
    """Measure how far ``g([v, w])`` is from ``g([w, v])`` for random cells.

    ``g`` itself is order sensitive; the forward pass averages both member
    orders, so this gap never reaches the pooled output.
    """
    rng = np.random.default_rng(seed)
    d = cfg.cell_width
    gaps = np.array([pair_gap(rng.normal(size=d), rng.normal(size=d), params)
                     for _ in range(trials)])
    return {"trials": trials, "mean_abs_gap": float(gaps.mean()), "max_abs_gap": float(gaps.max())}
