"""Shared fixtures and constructors for the test suite."""

from __future__ import annotations

from collections import deque

import numpy as np
import pytest

from hopgen.grounding import SubGraph
from hopgen.kg import KnowledgeGraph


def build_kg(n_concepts: int, edges: list[tuple[int, int, int]],
             n_relations: int = 2,
             weights: dict[tuple[int, int, int], float] | None = None,
             surfaces: list[str] | None = None) -> KnowledgeGraph:
    """KnowledgeGraph from forward (head, rel_id, tail) triples; reverses
    are added automatically, mirroring ingest."""
    concepts = surfaces or ["c%02d" % i for i in range(n_concepts)]
    relations = ["r%d" % i for i in range(n_relations)]
    adjacency: list[list[tuple[int, int, float]]] = [[] for _ in range(n_concepts)]
    for h, r, t in edges:
        w = (weights or {}).get((h, r, t), 1.0)
        adjacency[h].append((r, t, w))
        adjacency[t].append((r + n_relations, h, w))
    for lst in adjacency:
        lst.sort()
    return KnowledgeGraph(concepts=concepts, relations=relations,
                          lemma_index={s: i for i, s in enumerate(concepts)},
                          adjacency=adjacency)


def build_subgraph(num_nodes: int, edges: list[tuple[int, int, int]],
                   sources: set[int],
                   surfaces: list[str] | None = None) -> SubGraph:
    """Direct SubGraph constructor with BFS hop levels (no KG needed)."""
    out_adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for h, _r, t in edges:
        out_adj[h].append(t)
    levels = [-1] * num_nodes
    queue = deque()
    for s in sorted(sources):
        levels[s] = 0
        queue.append(s)
    while queue:
        u = queue.popleft()
        for v in out_adj[u]:
            if levels[v] < 0:
                levels[v] = levels[u] + 1
                queue.append(v)
    return SubGraph(
        nodes=list(range(num_nodes)),
        surfaces=surfaces or ["c%02d" % i for i in range(num_nodes)],
        hop_level=levels,
        source_flags=[i in sources for i in range(num_nodes)],
        edges=sorted(edges),
    )


def random_subgraph(rng: np.random.Generator, max_nodes: int = 12,
                    max_edges: int = 30, num_relation_codes: int = 4) -> SubGraph:
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    edges = set()
    for _ in range(m):
        h, t = (int(x) for x in rng.integers(n, size=2))
        if h != t:
            edges.add((h, int(rng.integers(num_relation_codes)), t))
    n_src = int(rng.integers(1, n + 1))
    sources = set(int(x) for x in rng.choice(n, size=n_src, replace=False))
    return build_subgraph(n, sorted(edges), sources)


@pytest.fixture(scope="session")
def mini_run(tmp_path_factory):
    """A tiny end-to-end CLI training run shared by CLI/service tests:
    synth data -> ingest -> train a small model for a few steps."""
    import json

    from hopgen import cli

    root = tmp_path_factory.mktemp("mini_run")
    data_dir = root / "data"
    out_dir = root / "run"
    rc = cli.main(["synth", "--seed", "7", "--out-dir", str(data_dir),
                   "--train-n", "8", "--dev-n", "4"])
    assert rc == 0
    graph = root / "kg.bin"
    rc = cli.main(["ingest", "--assertions", str(data_dir / "kg.tsv"),
                   "--relation-map", str(data_dir / "relation_map.tsv"),
                   "--out", str(graph)])
    assert rc == 0
    config = root / "config.json"
    config.write_text(json.dumps({
        "extraction": {"pos_filter": False},
        "model": {"d_model": 32, "n_heads": 2, "n_layers": 1,
                  "d_ff": 64, "d_g": 32, "gnn_layers": 1},
        "train": {"total_steps": 10, "batch_size": 4, "lr0": 1e-3,
                  "checkpoint_every": 5},
    }))
    rc = cli.main(["train", "--graph", str(graph),
                   "--data", str(data_dir / "train.jsonl"),
                   "--dev", str(data_dir / "dev.jsonl"),
                   "--out-dir", str(out_dir), "--config", str(config)])
    assert rc == 0
    return {
        "root": root,
        "graph": str(graph),
        "config": str(config),
        "checkpoint": str(out_dir / "final.ckpt"),
        "train_jsonl": str(data_dir / "train.jsonl"),
        "dev_jsonl": str(data_dir / "dev.jsonl"),
        "out_dir": str(out_dir),
    }
