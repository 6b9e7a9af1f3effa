"""Relational triple store: ingestion, relation grouping, reversal, lookup.

Raw relation names are grouped onto a canonical set via an editable map
(the default ships in data/relation_map.tsv). Every kept forward triple
gets a reversed twin under the inverse relation; duplicates keep the max
weight. The store is immutable after ingest.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

MAGIC = b"GRFKG1"


class KGError(Exception):
    pass


class UnknownRelationError(KGError):
    pass


class GraphFileError(KGError):
    def __init__(self, message: str, offset: int):
        super().__init__("%s (byte offset %d)" % (message, offset))
        self.offset = offset


@dataclass(frozen=True)
class RelationId:
    id: int
    is_inverse: bool

    def inverse(self) -> "RelationId":
        return RelationId(self.id, not self.is_inverse)


@dataclass(frozen=True)
class ConceptId:
    id: int
    surface: str


@dataclass
class KnowledgeGraph:
    """Immutable after construction; adjacency sorted by (relation, tail)."""

    concepts: list[str]                       # index -> surface
    relations: list[str]                      # canonical forward relation names
    lemma_index: dict[str, int]               # surface -> concept index
    # adjacency[c] = sorted list of (rel_code, tail, weight);
    # rel_code = rel_id for forward, rel_id + len(relations) for inverse
    adjacency: list[list[tuple[int, int, float]]] = field(default_factory=list)

    @property
    def num_relation_codes(self) -> int:
        return 2 * len(self.relations)

    def concept_id(self, index: int) -> ConceptId:
        return ConceptId(index, self.concepts[index])

    def relation_of_code(self, code: int) -> RelationId:
        n = len(self.relations)
        return RelationId(code % n, code >= n)

    def relation_name(self, code: int) -> str:
        rel = self.relation_of_code(code)
        name = self.relations[rel.id]
        return name + "^-1" if rel.is_inverse else name

    def inverse_code(self, code: int) -> int:
        n = len(self.relations)
        return code - n if code >= n else code + n

    def lookup(self, surface: str) -> int | None:
        return self.lemma_index.get(surface)

    def neighbors(self, c: int) -> list[tuple[int, int, float]]:
        """Outgoing (rel_code, tail, weight) edges of concept `c`, sorted."""
        if not 0 <= c < len(self.concepts):
            raise KGError("invalid concept id %r" % (c,))
        return self.adjacency[c]

    def triple_count(self) -> int:
        return sum(len(a) for a in self.adjacency)


def load_relation_map(path=None) -> dict[str, str]:
    """Read a raw->canonical relation grouping table.

    TSV with lines `raw<TAB>target`; target is a canonical name, `~name`
    (group with head/tail flipped) or `DROP`. Default table implements the
    17-group scheme used with ConceptNet.
    """
    if path is None:
        text = resources.files("hopgen.data").joinpath("relation_map.tsv").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        raw, target = line.split("\t")
        table[raw.lower()] = target
    return table


def load_stopwords(path=None) -> set[str]:
    if path is None:
        text = resources.files("hopgen.data").joinpath("stopwords.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return {w.strip() for w in text.splitlines() if w.strip()}


@dataclass
class IngestOptions:
    stopwords: set[str] = field(default_factory=set)
    lemmatize: "callable | None" = None       # surface -> lemma; identity if None


def _parse_conceptnet_term(uri: str) -> str | None:
    """'/c/en/volcano' -> 'volcano'; None for non-English or malformed."""
    parts = uri.split("/")
    if len(parts) < 4 or parts[1] != "c":
        return None
    if parts[2] != "en":
        return None
    return parts[3]


def _parse_line(line: str) -> tuple[str, str, str, float] | None:
    """Returns (head, raw_relation, tail, weight) or None if malformed."""
    fields = line.rstrip("\n").split("\t")
    # ConceptNet 5 assertion rows carry /r/ and /c/ URIs somewhere in the row.
    uri_fields = [f for f in fields if f.startswith("/")]
    if any(f.startswith("/r/") for f in uri_fields):
        rel = next((f for f in fields if f.startswith("/r/")), None)
        cs = [f for f in fields if f.startswith("/c/")]
        if rel is None or len(cs) < 2:
            return None
        head = _parse_conceptnet_term(cs[0])
        tail = _parse_conceptnet_term(cs[1])
        if head is None or tail is None:
            return None
        weight = 1.0
        for f in fields:
            if f.startswith("{"):
                try:
                    weight = float(json.loads(f).get("weight", 1.0))
                except (ValueError, TypeError):
                    pass
                break
        return head, rel.split("/")[2], tail, weight
    if len(fields) in (3, 4):
        head, rel, tail = fields[0], fields[1], fields[2]
        if not head or not rel or not tail:
            return None
        weight = 1.0
        if len(fields) == 4:
            try:
                weight = float(fields[3])
            except ValueError:
                return None
        return head, rel, tail, weight
    return None


def ingest(lines, relation_map: dict[str, str],
           options: IngestOptions | None = None,
           skip_report: list[str] | None = None) -> KnowledgeGraph:
    """Build a KnowledgeGraph from an iterable of assertion lines.

    Keeps only 1-gram, lowercased, non-stop-word concepts. Malformed lines
    go to `skip_report` as `<line_no>\\t<reason>`; an unmapped relation is a
    hard error.
    """
    options = options or IngestOptions()
    lemma = options.lemmatize or (lambda s: s)

    rel_names: list[str] = []
    rel_of: dict[str, int] = {}
    concept_of: dict[str, int] = {}
    concepts: list[str] = []
    # (head, rel_code_parity-free) -> weight; keyed on forward triples only
    forward: dict[tuple[int, int, int], float] = {}

    def normalize(surface: str) -> str | None:
        surface = lemma(surface.lower())
        if "_" in surface or " " in surface or not surface:
            return None
        if surface in options.stopwords:
            return None
        return surface

    def intern(surface: str) -> int:
        idx = concept_of.get(surface)
        if idx is None:
            idx = len(concepts)
            concept_of[surface] = idx
            concepts.append(surface)
        return idx

    unknown: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parsed = _parse_line(line)
        if parsed is None:
            if skip_report is not None:
                skip_report.append("%d\tmalformed" % line_no)
            continue
        head_s, raw_rel, tail_s, weight = parsed
        target = relation_map.get(raw_rel.lower())
        if target is None:
            unknown.add(raw_rel)
            continue
        if target == "DROP":
            if skip_report is not None:
                skip_report.append("%d\tdropped relation %s" % (line_no, raw_rel))
            continue
        flipped = target.startswith("~")
        canon = target[1:] if flipped else target
        if flipped:
            head_s, tail_s = tail_s, head_s
        head_n = normalize(head_s)
        tail_n = normalize(tail_s)
        if head_n is None or tail_n is None:
            if skip_report is not None:
                skip_report.append("%d\tnon-1-gram or stop-word concept" % line_no)
            continue
        if head_n == tail_n:
            if skip_report is not None:
                skip_report.append("%d\tself-loop" % line_no)
            continue
        if weight < 0:
            if skip_report is not None:
                skip_report.append("%d\tnegative weight" % line_no)
            continue
        h = intern(head_n)
        t = intern(tail_n)
        r = rel_of.get(canon)
        if r is None:
            r = len(rel_names)
            rel_of[canon] = r
            rel_names.append(canon)
        key = (h, r, t)
        forward[key] = max(forward.get(key, 0.0), weight)

    if unknown:
        raise UnknownRelationError(
            "relations missing from relation_map: %s" % ", ".join(sorted(unknown)))

    n_rel = len(rel_names)
    adjacency: list[list[tuple[int, int, float]]] = [[] for _ in concepts]
    for (h, r, t), w in forward.items():
        adjacency[h].append((r, t, w))
        adjacency[t].append((r + n_rel, h, w))
    for lst in adjacency:
        lst.sort()

    return KnowledgeGraph(concepts=concepts, relations=rel_names,
                          lemma_index=dict(concept_of), adjacency=adjacency)


# -- binary serialization -------------------------------------------------


def save(kg: KnowledgeGraph, path: str) -> None:
    """Magic, u32 header length, JSON header, then little-endian arrays:
    u32 head/rel_code/tail plus f32 weight, one entry per stored edge."""
    heads, rels, tails, weights = [], [], [], []
    for h, edges in enumerate(kg.adjacency):
        for r, t, w in edges:
            heads.append(h)
            rels.append(r)
            tails.append(t)
            weights.append(w)
    header = json.dumps({
        "concepts": kg.concepts,
        "relations": kg.relations,
        "edge_count": len(heads),
        "arrays": ["head:u32", "rel_code:u32", "tail:u32", "weight:f32"],
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr, dt in ((heads, "<u4"), (rels, "<u4"), (tails, "<u4"), (weights, "<f4")):
            fh.write(np.asarray(arr, dtype=dt).tobytes())


def load(path: str) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < len(MAGIC) + 4:
        raise GraphFileError("file truncated before header", len(buf))
    if buf[:len(MAGIC)] != MAGIC:
        raise GraphFileError("bad magic (version mismatch?)", 0)
    (hlen,) = struct.unpack_from("<I", buf, len(MAGIC))
    off = len(MAGIC) + 4
    if len(buf) < off + hlen:
        raise GraphFileError("file truncated inside header", len(buf))
    try:
        header = json.loads(buf[off:off + hlen])
    except ValueError:
        raise GraphFileError("unparsable header", off)
    off += hlen
    n = int(header["edge_count"])
    need = off + n * (4 * 3 + 4)
    if len(buf) < need:
        raise GraphFileError("file truncated inside arrays", len(buf))
    arrays = {}
    for name, dt in (("head", "<u4"), ("rel_code", "<u4"), ("tail", "<u4"), ("weight", "<f4")):
        arrays[name] = np.frombuffer(buf, dtype=dt, count=n, offset=off)
        off += 4 * n
    concepts = list(header["concepts"])
    adjacency: list[list[tuple[int, int, float]]] = [[] for _ in concepts]
    for h, r, t, w in zip(arrays["head"], arrays["rel_code"], arrays["tail"], arrays["weight"]):
        adjacency[int(h)].append((int(r), int(t), float(w)))
    for lst in adjacency:
        lst.sort()
    return KnowledgeGraph(concepts=concepts, relations=list(header["relations"]),
                          lemma_index={s: i for i, s in enumerate(concepts)},
                          adjacency=adjacency)


def ingest_file(path: str, relation_map: dict[str, str],
                options: IngestOptions | None = None,
                skip_report_path: str | None = None) -> KnowledgeGraph:
    skips: list[str] = []
    with open(path, encoding="utf-8") as fh:
        kg = ingest(fh, relation_map, options, skips)
    if skip_report_path:
        with io.open(skip_report_path, "w", encoding="utf-8") as out:
            out.write("\n".join(skips) + ("\n" if skips else ""))
    return kg
