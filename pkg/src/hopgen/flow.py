"""Dynamic multi-hop evidence propagation over the subgraph.

At each decoding step, every edge gets a context-conditioned relevance
score; evidence then flows outward from the source concepts for a bounded
number of hops. A node is scored once, at its first reachable hop, by
aggregating (discounted parent score + edge relevance) over in-neighbors
visited at the previous hop. Unreached nodes stay out of the final
softmax.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph_encoder import GraphEncoding
from .grounding import SubGraph

UNREACHED = -1


class UnsupportedTrace(RuntimeError):
    pass


@dataclass
class FlowConfig:
    gamma: float = 0.5
    aggregator: str = "max"        # "max" or "mean"
    hops: int = 2

    def __post_init__(self):
        if self.aggregator not in ("max", "mean"):
            raise ValueError("aggregator must be 'max' or 'mean'")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")


@dataclass
class FlowState:
    """Per-step node scores with the bookkeeping needed for path tracing."""

    reached: list[int]                 # node indices in score order
    scores: Tensor                     # len(reached) vector, sources first
    visited_level: list[int]           # per node; UNREACHED if never scored
    argmax_backptr: list[int]          # per node; best in-edge index or -1

    def score_of(self, v: int) -> float | None:
        if self.visited_level[v] == UNREACHED:
            return None
        return float(self.scores.data[self.reached.index(v)])

    def scores_by_node(self) -> dict[int, float]:
        return {v: float(self.scores.data[i]) for i, v in enumerate(self.reached)}


def triple_relevance(enc: GraphEncoding, edge: tuple[int, int, int],
                     h_t: Tensor, w_sim: Tensor) -> Tensor:
    """sigma([h_u; h_r; h_v]^T W_sim h_t) for a single edge."""
    u, r, v = edge
    feat = ad.concat([ad.gather(enc.node_states, [u]).reshape(-1),
                      ad.gather(enc.relation_states, [r]).reshape(-1),
                      ad.gather(enc.node_states, [v]).reshape(-1)])
    return ad.sigmoid(feat @ w_sim @ h_t)


def relevance_matrix(g: SubGraph, enc: GraphEncoding, hidden: Tensor,
                     w_sim: Tensor) -> Tensor:
    """Relevance of every edge at every step: E x T for hidden T x d."""
    heads = [e[0] for e in g.edges]
    rels = [e[1] for e in g.edges]
    tails = [e[2] for e in g.edges]
    feat = ad.concat([ad.gather(enc.node_states, heads),
                      ad.gather(enc.relation_states, rels),
                      ad.gather(enc.node_states, tails)], axis=1)   # E x 3d_g
    return ad.sigmoid(feat @ w_sim @ hidden.T)


def flow_levels(g: SubGraph, hops: int) -> list[int]:
    """BFS distance from the source set, capped at `hops`; UNREACHED past it."""
    levels = [UNREACHED] * g.num_nodes
    out_adj: list[list[int]] = [[] for _ in range(g.num_nodes)]
    for h, _r, t in g.edges:
        out_adj[h].append(t)
    queue = deque()
    for v, is_src in enumerate(g.source_flags):
        if is_src:
            levels[v] = 0
            queue.append(v)
    while queue:
        u = queue.popleft()
        if levels[u] >= hops:
            continue
        for v in out_adj[u]:
            if levels[v] == UNREACHED:
                levels[v] = levels[u] + 1
                queue.append(v)
    return levels


def propagate(g: SubGraph, enc: GraphEncoding | None, h_t: Tensor | None,
              cfg: FlowConfig, w_sim: Tensor | None = None,
              relevance: Tensor | None = None) -> FlowState:
    """Frontier propagation of Eq.-style node scores.

    `relevance` (a length-E vector for this step) may be passed directly;
    otherwise it is computed from (enc, h_t, w_sim).
    """
    if not any(g.source_flags):
        raise ValueError("subgraph has no source node")
    if relevance is None:
        hidden = h_t.reshape(1, -1) if h_t.data.ndim == 1 else h_t
        relevance = relevance_matrix(g, enc, hidden, w_sim).reshape(-1)

    levels = flow_levels(g, cfg.hops)
    backptr = [-1] * g.num_nodes
    dtype = relevance.dtype if len(g.edges) else np.float32

    by_level: dict[int, list[int]] = {}
    for v, lv in enumerate(levels):
        if lv != UNREACHED:
            by_level.setdefault(lv, []).append(v)
    max_level = max(by_level)

    reached: list[int] = list(by_level[0])
    parts: list[Tensor] = [Tensor(np.ones(len(by_level[0]), dtype=dtype))]
    local = {v: i for i, v in enumerate(by_level[0])}   # node -> offset in its level part

    for k in range(1, max_level + 1):
        nodes_k = by_level[k]
        seg_of = {v: i for i, v in enumerate(nodes_k)}
        # in-edges whose head sits exactly one level below
        picked = [(seg_of[t], i, h) for i, (h, _r, t) in enumerate(g.edges)
                  if t in seg_of and levels[h] == k - 1]
        picked.sort()
        seg_ids = [p[0] for p in picked]
        edge_idx = [p[1] for p in picked]
        head_pos = [local[p[2]] for p in picked]
        contrib = ad.gather(parts[k - 1], head_pos) * cfg.gamma \
            + ad.gather(relevance, edge_idx)
        if cfg.aggregator == "max":
            scores_k, arg = ad.segment_max(contrib, seg_ids, len(nodes_k))
            for v, a in zip(nodes_k, arg):
                backptr[v] = edge_idx[int(a)]
        else:
            scores_k = ad.segment_mean(contrib, seg_ids, len(nodes_k))
        parts.append(scores_k)
        local = {v: i for i, v in enumerate(nodes_k)}
        reached.extend(nodes_k)

    return FlowState(reached=reached, scores=ad.concat(parts),
                     visited_level=levels, argmax_backptr=backptr)


def node_distribution(state: FlowState) -> Tensor:
    """Softmax over the scores of reached nodes (unreached get exactly 0)."""
    if not state.reached:
        raise ValueError("no reached nodes")
    return ad.softmax(state.scores, axis=-1)


@dataclass
class TracedPath:
    node: int
    score: float
    edges: list[int] = field(default_factory=list)   # edge indices, source first


def trace_paths(state: FlowState, g: SubGraph, top_k: int) -> list[TracedPath]:
    """Follow argmax back-pointers from the top-scored nodes to a source."""
    ranked = sorted(range(len(state.reached)),
                    key=lambda i: (-float(state.scores.data[i]), state.reached[i]))
    out = []
    for i in ranked[:top_k]:
        v = state.reached[i]
        path: list[int] = []
        cur = v
        while state.visited_level[cur] > 0:
            e = state.argmax_backptr[cur]
            if e < 0:
                if state.visited_level[cur] != 0:
                    raise UnsupportedTrace(
                        "no back-pointers recorded (mean aggregator?)")
                break
            path.append(e)
            cur = g.edges[e][0]
        path.reverse()
        out.append(TracedPath(node=v, score=float(state.scores.data[i]), edges=path))
    return out


def format_trace(paths: list[TracedPath], g: SubGraph,
                 relation_name) -> str:
    """One line per path: concept<TAB>score<TAB>s --r--> u --r--> v."""
    lines = []
    for p in paths:
        if p.edges:
            chain = g.surfaces[g.edges[p.edges[0]][0]]
            for e in p.edges:
                h, r, t = g.edges[e]
                chain += " --%s--> %s" % (relation_name(r), g.surfaces[t])
        else:
            chain = g.surfaces[p.node]
        lines.append("%s\t%.6f\t%s" % (g.surfaces[p.node], p.score, chain))
    return "\n".join(lines)
