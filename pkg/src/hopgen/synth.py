"""Deterministic synthetic KG + parallel corpus for end-to-end testing.

Every target contains exactly one concept that sits two hops away from the
source concept mentioned in the input; a cue word in the source selects
which two-relation pattern identifies it. Solving the task therefore
requires propagating evidence along 2-hop paths, not just local concept
matching.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np


@dataclass
class SynthSpec:
    n_concepts: int = 200
    n_relations: int = 6
    n_fillers: int = 120
    n_cues: int = 8
    out_degree: int = 6
    src_fillers: int = 3
    tgt_fillers: int = 3
    # target slot of the concept; None draws a fresh slot per example
    concept_slot: int | None = None


@dataclass
class SynthCorpus:
    triples: list[tuple[str, str, str, float]]
    train: list[dict]
    dev: list[dict]
    concepts: list[str]
    relations: list[str]


def generate(seed: int, n_train: int = 64, n_dev: int = 32,
             spec: SynthSpec | None = None) -> SynthCorpus:
    spec = spec or SynthSpec()
    rng = np.random.default_rng(seed)
    concepts = ["n%02d" % i for i in range(spec.n_concepts)]
    relations = ["r%d" % i for i in range(spec.n_relations)]
    fillers = ["w%03d" % i for i in range(spec.n_fillers)]
    cues = ["q%d" % i for i in range(spec.n_cues)]

    # random sparse multi-relational graph
    triples: list[tuple[str, str, str, float]] = []
    edge_set: set[tuple[int, int, int]] = set()
    for h in range(spec.n_concepts):
        targets = rng.choice(spec.n_concepts, size=spec.out_degree, replace=False)
        for t in targets:
            t = int(t)
            if t == h:
                continue
            r = int(rng.integers(spec.n_relations))
            if (h, r, t) in edge_set:
                continue
            edge_set.add((h, r, t))
            triples.append((concepts[h], relations[r], concepts[t], 1.0))

    # cue -> (first relation, second relation) pattern
    patterns = []
    while len(patterns) < spec.n_cues:
        p = (int(rng.integers(spec.n_relations)), int(rng.integers(spec.n_relations)))
        if p not in patterns:
            patterns.append(p)

    out_adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(spec.n_concepts)}
    neighbor: dict[int, set[int]] = {i: set() for i in range(spec.n_concepts)}
    for h, r, t in sorted(edge_set):
        out_adj[h].append((r, t))
        neighbor[h].add(t)
        neighbor[t].add(h)

    def endpoints(c0: int, pat: tuple[int, int]) -> set[int]:
        ra, rb = pat
        out = set()
        for r1, c1 in out_adj[c0]:
            if r1 != ra:
                continue
            for r2, c2 in out_adj[c1]:
                # only genuinely 2-hop endpoints count
                if r2 == rb and c2 != c0 and c2 not in neighbor[c0]:
                    out.add(c2)
        return out

    def make_example() -> dict | None:
        c0 = int(rng.integers(spec.n_concepts))
        cue_idx = int(rng.integers(spec.n_cues))
        ends = endpoints(c0, patterns[cue_idx])
        if len(ends) != 1:
            return None
        c2 = next(iter(ends))
        sf = [fillers[int(i)] for i in rng.integers(spec.n_fillers, size=spec.src_fillers)]
        tf = [fillers[int(i)] for i in rng.integers(spec.n_fillers, size=spec.tgt_fillers)]
        src = " ".join([cues[cue_idx], sf[0], concepts[c0]] + sf[1:])
        # a varying concept slot keeps any single target position from being
        # categorically concept-bearing
        if spec.concept_slot is None:
            slot = int(rng.integers(spec.tgt_fillers + 1))
        else:
            slot = spec.concept_slot
        tgt = " ".join(tf[:slot] + [concepts[c2]] + tf[slot:])
        return {"src": src, "tgt": tgt}

    rows: list[dict] = []
    attempts = 0
    while len(rows) < n_train + n_dev:
        attempts += 1
        if attempts > 200 * (n_train + n_dev):
            raise RuntimeError("synthetic graph too sparse to sample examples")
        ex = make_example()
        if ex is not None:
            rows.append(ex)
    return SynthCorpus(triples=triples, train=rows[:n_train], dev=rows[n_train:],
                       concepts=concepts, relations=relations)


def write(corpus: SynthCorpus, out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "kg": os.path.join(out_dir, "kg.tsv"),
        "train": os.path.join(out_dir, "train.jsonl"),
        "dev": os.path.join(out_dir, "dev.jsonl"),
        "relation_map": os.path.join(out_dir, "relation_map.tsv"),
    }
    with open(paths["kg"], "w", encoding="utf-8") as fh:
        for h, r, t, w in corpus.triples:
            fh.write("%s\t%s\t%s\t%g\n" % (h, r, t, w))
    with open(paths["relation_map"], "w", encoding="utf-8") as fh:
        for r in corpus.relations:
            fh.write("%s\t%s\n" % (r, r))
    for split in ("train", "dev"):
        with open(paths[split], "w", encoding="utf-8") as fh:
            for row in getattr(corpus, split):
                fh.write(json.dumps(row) + "\n")
    return paths
