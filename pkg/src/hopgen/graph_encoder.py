"""Static multi-relational encoding of the extracted subgraph.

Each layer aggregates incoming (neighbor, relation) pairs through the
TransE-style composition h_u - h_r, averages them, adds a self term and
applies ReLU; relation embeddings pass through their own linear map per
layer. Outputs feed the dynamic reasoning module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .grounding import SubGraph


@dataclass
class GraphEncoderConfig:
    d_g: int = 64
    layers: int = 2
    num_relation_codes: int = 34   # 17 canonical + 17 inverses by default


@dataclass
class GraphEncoding:
    node_states: Tensor            # |V| x d_g
    relation_states: Tensor        # num_relation_codes x d_g


def init_params(cfg: GraphEncoderConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, Tensor]:
    params = {
        "rel_emb": Tensor(rng.normal(0.0, 0.02, (cfg.num_relation_codes, cfg.d_g)).astype(dtype),
                          requires_grad=True),
    }
    for l in range(cfg.layers):
        for name in ("w_n", "w_s", "w_r"):
            params["gnn%d.%s" % (l, name)] = Tensor(
                rng.normal(0.0, 0.02, (cfg.d_g, cfg.d_g)).astype(dtype), requires_grad=True)
    return params


def compose(h_u: Tensor, h_r: Tensor) -> Tensor:
    """TransE-style composition: elementwise difference."""
    if h_u.shape != h_r.shape:
        raise ad.ShapeError("compose: %s vs %s" % (h_u.shape, h_r.shape))
    return h_u - h_r


def encode(g: SubGraph, node_init: Tensor, params: dict,
           cfg: GraphEncoderConfig) -> GraphEncoding:
    """Run the relational layers; `node_init` is the |V| x d_g embedding of
    the subgraph nodes (word embeddings, possibly projected)."""
    if g.num_nodes == 0:
        raise ValueError("cannot encode an empty subgraph")
    n = g.num_nodes
    heads = np.array([e[0] for e in g.edges], dtype=np.int64)
    rels = np.array([e[1] for e in g.edges], dtype=np.int64)
    tails = np.array([e[2] for e in g.edges], dtype=np.int64)

    # mean-aggregation matrix: agg[v, i] = 1/|N(v)| for edge i entering v
    dtype = node_init.dtype
    agg = np.zeros((n, len(g.edges)), dtype=dtype)
    if len(g.edges):
        indeg = np.bincount(tails, minlength=n).astype(dtype)
        indeg[indeg == 0] = 1.0
        agg[tails, np.arange(len(g.edges))] = 1.0 / indeg[tails]
    agg_t = Tensor(agg)

    h_v = node_init
    h_r = params["rel_emb"]
    for l in range(cfg.layers):
        if len(g.edges):
            phi = compose(ad.gather(h_v, heads), ad.gather(h_r, rels))   # E x d
            o = agg_t @ (phi @ params["gnn%d.w_n" % l].T)                # V x d
        else:
            o = ad.zeros((n, cfg.d_g), dtype=dtype)
        h_v = ad.relu(o + h_v @ params["gnn%d.w_s" % l].T)
        h_r = h_r @ params["gnn%d.w_r" % l].T
    return GraphEncoding(node_states=h_v, relation_states=h_r)
