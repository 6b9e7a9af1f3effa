"""Independent reference implementations used to check the package code.

These deliberately avoid the package's propagation/search code paths:
the MAX oracle enumerates level-respecting paths explicitly, the MEAN
oracle re-evaluates the recursion directly, and the beam oracle scores
every possible decode by brute force.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from hopgen.grounding import SubGraph

UNREACHED = -1


def bfs_levels(g: SubGraph, hops: int) -> list[int]:
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


def flow_scores_max_oracle(g: SubGraph, relevance: np.ndarray, gamma: float,
                           hops: int) -> dict[int, float]:
    """ns(v) = max over level-respecting paths s -> v of
    gamma^k * 1 + sum_i gamma^(k-i) * R(e_i), by explicit enumeration."""
    levels = bfs_levels(g, hops)
    best: dict[int, float] = {v: 1.0 for v in range(g.num_nodes) if levels[v] == 0}

    def walk(node: int, value: float):
        lv = levels[node]
        for i, (h, _r, t) in enumerate(g.edges):
            if h == node and levels[t] == lv + 1:
                nxt = gamma * value + float(relevance[i])
                if nxt > best.get(t, -math.inf):
                    best[t] = nxt
                walk(t, nxt)

    for v in range(g.num_nodes):
        if levels[v] == 0:
            walk(v, 1.0)
    return best


def flow_scores_mean_oracle(g: SubGraph, relevance: np.ndarray, gamma: float,
                            hops: int) -> dict[int, float]:
    """Direct recursive re-evaluation of the MEAN frontier recursion."""
    levels = bfs_levels(g, hops)
    scores: dict[int, float] = {v: 1.0 for v in range(g.num_nodes) if levels[v] == 0}
    max_level = max((lv for lv in levels if lv != UNREACHED), default=0)
    for k in range(1, max_level + 1):
        for v in range(g.num_nodes):
            if levels[v] != k:
                continue
            contribs = [gamma * scores[h] + float(relevance[i])
                        for i, (h, _r, t) in enumerate(g.edges)
                        if t == v and levels[h] == k - 1]
            scores[v] = sum(contribs) / len(contribs)
    return scores


def enumerate_hypotheses(step_fn, alphabet: list[int], eos: int,
                         max_len: int) -> list[tuple[float, list[int], bool]]:
    """All possible decodes up to max_len steps, scored like the beam
    search (log-prob divided by emitted token count, [eos] included)."""
    results: list[tuple[float, list[int], bool]] = []

    def expand(prefix: list[int], logprob: float):
        if len(prefix) == max_len:
            score = logprob / max(len(prefix), 1)
            results.append((score, list(prefix), False))
            return
        probs = step_fn(prefix)
        for tok in [eos] + alphabet:
            lp = logprob + math.log(max(float(probs[tok]), 1e-300))
            if tok == eos:
                score = lp / max(len(prefix) + 1, 1)
                results.append((score, list(prefix), True))
            else:
                expand(prefix + [tok], lp)

    expand([], 0.0)
    results.sort(key=lambda r: (-r[0], r[1]))
    return results


def corpus_bleu_oracle(hyps: list[list[str]], refs: list[list[list[str]]],
                       n: int) -> float:
    """Straightforward corpus BLEU re-implementation for cross-checking."""
    from collections import Counter

    def grams(toks, k):
        return Counter(tuple(toks[i:i + k]) for i in range(len(toks) - k + 1))

    log_p = []
    hyp_len = sum(len(h) for h in hyps)
    ref_len = 0
    for h, rs in zip(hyps, refs):
        ref_len += min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
    for k in range(1, n + 1):
        num = den = 0
        for h, rs in zip(hyps, refs):
            hc = grams(h, k)
            best = Counter()
            for r in rs:
                rc = grams(r, k)
                for gram, c in rc.items():
                    best[gram] = max(best[gram], c)
            num += sum(min(c, best[gram]) for gram, c in hc.items())
            den += sum(hc.values())
        if num == 0 or den == 0:
            return 0.0
        log_p.append(math.log(num / den))
    bp = 1.0 if hyp_len > ref_len else (
        math.exp(1.0 - ref_len / hyp_len) if hyp_len else 0.0)
    return bp * math.exp(sum(log_p) / n)
