"""Ground text in the knowledge graph and carve out a per-example subgraph.

Matching is lemma-based (exception table + suffix stripping). Extraction
runs a fixed number of frontier hops; each hop ranks candidate neighbors by
incoming degree from the current subgraph and keeps the top B (ties broken
by ascending concept id). BFS shortest-path edge labels provide the weak
supervision signal for triple relevance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources

from .kg import KnowledgeGraph


class EmptyGrounding(ValueError):
    pass


@dataclass(frozen=True)
class ConceptMention:
    token_index: int
    concept: int            # concept index in the KnowledgeGraph


@dataclass
class ExtractionConfig:
    hops: int = 2           # H
    top_b: int = 100        # B
    pos_filter: bool = True

    def __post_init__(self):
        if self.hops < 1 or self.top_b < 1:
            raise ValueError("hops and top_b must be >= 1")


@dataclass
class SubGraph:
    nodes: list[int]                          # KG concept indices, order fixed
    surfaces: list[str]
    hop_level: list[int]                      # BFS distance from sources
    source_flags: list[bool]
    edges: list[tuple[int, int, int]]         # (head_idx, rel_code, tail_idx)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def in_edges(self, v: int) -> list[int]:
        return [i for i, (_, _, t) in enumerate(self.edges) if t == v]

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"surface": s, "hop_level": h, "is_source": f}
                for s, h, f in zip(self.surfaces, self.hop_level, self.source_flags)
            ],
            "edges": [{"head": h, "relation": r, "tail": t} for h, r, t in self.edges],
        }


class Lemmatizer:
    """Exception-table lookup with rule-based suffix stripping fallback."""

    SUFFIXES = ("ing", "ed", "es", "s")

    def __init__(self, table: dict[str, str] | None = None,
                 known: set[str] | None = None):
        self.table = table if table is not None else _default_lemma_table()
        # When a vocabulary of valid lemmas is given, suffix stripping only
        # fires if the stripped form is a known lemma.
        self.known = known

    def __call__(self, word: str) -> str:
        word = word.lower()
        hit = self.table.get(word)
        if hit is not None:
            return hit
        for suf in self.SUFFIXES:
            if word.endswith(suf) and len(word) - len(suf) >= 2:
                stem = word[: -len(suf)]
                candidates = [stem]
                if suf in ("ing", "ed"):
                    candidates.append(stem + "e")
                    if len(stem) >= 3 and stem[-1] == stem[-2]:
                        candidates.append(stem[:-1])
                for cand in candidates:
                    if self.known is None or cand in self.known:
                        return cand
        return word


def _default_lemma_table() -> dict[str, str]:
    text = resources.files("hopgen.data").joinpath("lemma_exceptions.tsv").read_text()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, lemma = line.split("\t")
        table[word] = lemma
    return table


def load_pos_lexicon(path=None) -> dict[str, str]:
    if path is None:
        text = resources.files("hopgen.data").joinpath("pos_lexicon.tsv").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, pos = line.split("\t")
        table[word] = pos
    return table


@dataclass
class Lexicons:
    lemmatizer: Lemmatizer = field(default_factory=Lemmatizer)
    pos: dict[str, str] = field(default_factory=dict)
    stopwords: set[str] = field(default_factory=set)


def match_concepts(tokens: list[str], kg: KnowledgeGraph,
                   lexicons: Lexicons, pos_filter: bool = True) -> list[ConceptMention]:
    """Lemma-match tokens against the graph vocabulary."""
    mentions = []
    for i, tok in enumerate(tokens):
        word = tok.lower()
        if word in lexicons.stopwords:
            continue
        lemma = lexicons.lemmatizer(word)
        if lemma in lexicons.stopwords:
            continue
        if pos_filter and lexicons.pos and lexicons.pos.get(lemma) not in ("n", "v"):
            continue
        cid = kg.lookup(lemma)
        if cid is not None:
            mentions.append(ConceptMention(i, cid))
    return mentions


def extract_subgraph(kg: KnowledgeGraph, sources: set[int],
                     cfg: ExtractionConfig) -> SubGraph:
    """H-hop frontier expansion with top-B incoming-degree pruning."""
    if not sources:
        raise EmptyGrounding("no source concepts to ground on")
    included = sorted(sources)
    included_set = set(included)
    for _hop in range(cfg.hops):
        degree: dict[int, int] = {}
        for u in included:
            connected = {t for _, t, _ in kg.neighbors(u)}
            for cand in connected:
                if cand not in included_set:
                    degree[cand] = degree.get(cand, 0) + 1
        if not degree:
            break
        ranked = sorted(degree.items(), key=lambda kv: (-kv[1], kv[0]))
        for cand, _ in ranked[: cfg.top_b]:
            included_set.add(cand)
            included.append(cand)

    node_order = sorted(included_set)
    index_of = {c: i for i, c in enumerate(node_order)}
    edges = []
    for c in node_order:
        for r, t, _w in kg.neighbors(c):
            if t in included_set:
                edges.append((index_of[c], r, index_of[t]))
    edges.sort()

    # hop levels by BFS over the final edge set
    levels = [-1] * len(node_order)
    out_adj: list[list[int]] = [[] for _ in node_order]
    for h, _r, t in edges:
        out_adj[h].append(t)
    queue = deque()
    for s in sorted(sources):
        levels[index_of[s]] = 0
        queue.append(index_of[s])
    while queue:
        u = queue.popleft()
        for v in out_adj[u]:
            if levels[v] < 0:
                levels[v] = levels[u] + 1
                queue.append(v)

    return SubGraph(
        nodes=node_order,
        surfaces=[kg.concepts[c] for c in node_order],
        hop_level=levels,
        source_flags=[c in sources for c in node_order],
        edges=edges,
    )


def bfs_edge_labels(g: SubGraph, target_concepts: set[int]) -> list[int]:
    """1 for edges on some shortest path from a source node to a target
    concept present in the subgraph, 0 otherwise."""
    labels = [0] * len(g.edges)
    targets = [i for i, c in enumerate(g.nodes) if c in target_concepts]
    if not targets:
        return labels

    out_adj: list[list[tuple[int, int]]] = [[] for _ in g.nodes]   # (tail, edge_idx)
    in_adj: list[list[tuple[int, int]]] = [[] for _ in g.nodes]    # (head, edge_idx)
    for i, (h, _r, t) in enumerate(g.edges):
        out_adj[h].append((t, i))
        in_adj[t].append((h, i))

    # multi-source forward distances
    dist_s = [-1] * g.num_nodes
    queue = deque()
    for v, is_src in enumerate(g.source_flags):
        if is_src:
            dist_s[v] = 0
            queue.append(v)
    while queue:
        u = queue.popleft()
        for v, _ in out_adj[u]:
            if dist_s[v] < 0:
                dist_s[v] = dist_s[u] + 1
                queue.append(v)

    for t in targets:
        if dist_s[t] <= 0:
            continue     # unreachable, or the target is itself a source
        # reverse distances toward this target
        dist_t = [-1] * g.num_nodes
        dist_t[t] = 0
        queue = deque([t])
        while queue:
            v = queue.popleft()
            for u, _ in in_adj[v]:
                if dist_t[u] < 0:
                    dist_t[u] = dist_t[v] + 1
                    queue.append(u)
        total = dist_s[t]
        for i, (h, _r, v) in enumerate(g.edges):
            if dist_s[h] >= 0 and dist_t[v] >= 0 and dist_s[h] + 1 + dist_t[v] == total:
                labels[i] = 1
    return labels
