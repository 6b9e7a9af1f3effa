"""Loss assembly, Adam with linear decay, the training loop and checkpoints.

The optimized objective is l_gen + alpha * l_gate + beta * l_weak, averaged
over the examples of a batch. Checkpoints are magic + JSON manifest +
little-endian f32 arrays in manifest order; the effective config is echoed
into the manifest.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .context_encoder import EOS, Tokenizer
from .grounding import (ExtractionConfig, Lexicons, SubGraph, bfs_edge_labels,
                        extract_subgraph, match_concepts)
from .kg import KnowledgeGraph
from .model import Model, ModelConfig

CKPT_MAGIC = b"GRFCP1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Example:
    x: list[int]
    y_gold: list[int]                  # target ids, [eos] last
    subgraph: SubGraph
    gate_labels: list[int]             # per target position
    weak_edge_labels: list[int]        # per subgraph edge
    src_text: str = ""
    tgt_text: str = ""

    def __post_init__(self):
        if len(self.gate_labels) != len(self.y_gold):
            raise ValueError("gate label count must match target length")
        if len(self.weak_edge_labels) != len(self.subgraph.edges):
            raise ValueError("weak label count must match edge count")


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    lr0: float = 1e-3
    total_steps: int = 500
    batch_size: int = 16
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-6
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def prepare_example(src_text: str, tgt_text: str, kg: KnowledgeGraph,
                    tokenizer: Tokenizer, lexicons: Lexicons,
                    ext_cfg: ExtractionConfig) -> Example:
    """Tokenize, ground, extract the subgraph and build supervision labels."""
    x = tokenizer.encode(src_text)
    tgt_words = tgt_text.lower().split()
    y_gold = tokenizer.encode(tgt_text) + [EOS]
    mentions = match_concepts(src_text.lower().split(), kg, lexicons,
                              pos_filter=ext_cfg.pos_filter)
    sources = {m.concept for m in mentions}
    g = extract_subgraph(kg, sources, ext_cfg)
    node_surfaces = set(g.surfaces)
    gate_labels = []
    target_concepts = set()
    for w in tgt_words:
        lemma = lexicons.lemmatizer(w)
        hit = lemma in node_surfaces
        gate_labels.append(1 if hit else 0)
        if hit:
            cid = kg.lookup(lemma)
            if cid is not None:
                target_concepts.add(cid)
    gate_labels.append(0)   # [eos]
    weak = bfs_edge_labels(g, target_concepts)
    return Example(x=x, y_gold=y_gold, subgraph=g, gate_labels=gate_labels,
                   weak_edge_labels=weak, src_text=src_text, tgt_text=tgt_text)


# -- standalone loss surfaces --------------------------------------------


def loss_gen(example: Example, model: Model, per_token: bool = False) -> float:
    """Teacher-forced NLL of the gold target; summed by default,
    mean-per-token with the flag."""
    out = model.forward_example(example)
    val = float(out.l_gen.data)
    return val / out.n_tokens if per_token else val


def loss_gate(gate_values: np.ndarray, gate_labels) -> float:
    p = np.clip(np.asarray(gate_values, dtype=np.float64), 1e-12, 1 - 1e-12)
    y = np.asarray(gate_labels, dtype=np.float64)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def loss_weak(relevance_values: np.ndarray, edge_labels) -> float:
    """BCE between per-(edge, step) relevances and static edge labels."""
    p = np.clip(np.asarray(relevance_values, dtype=np.float64), 1e-12, 1 - 1e-12)
    y = np.asarray(edge_labels, dtype=np.float64)
    if p.ndim == 2:
        y = np.repeat(y[:, None], p.shape[1], axis=1)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


# -- optimizer ------------------------------------------------------------


class Adam:
    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2, eps = self.cfg.adam_beta1, self.cfg.adam_beta2, self.cfg.adam_eps
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * (g * g)
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear decay to zero, no warmup; `step` counts completed steps."""
    return cfg.lr0 * (1.0 - step / cfg.total_steps)


# -- loop -----------------------------------------------------------------


@dataclass
class TrainResult:
    log_rows: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)


def batch_losses(model: Model, batch: list[Example], cfg: TrainConfig,
                 variant: str = "full"):
    """Returns (total scalar Tensor, stats dict); mean reduction over
    examples makes the loss order-invariant within a batch."""
    total = None
    s_gen = s_gate = s_weak = 0.0
    gate_sum, gate_n = 0.0, 0
    tok_sum, tok_correct = 0, 0
    for ex in batch:
        out = model.forward_example(ex, variant=variant)
        term = out.l_gen + cfg.alpha * out.l_gate + cfg.beta * out.l_weak
        total = term if total is None else total + term
        s_gen += float(out.l_gen.data)
        s_gate += float(out.l_gate.data)
        s_weak += float(out.l_weak.data)
        gate_sum += float(out.gates.data.sum())
        gate_n += out.gates.data.size
        tok_sum += out.n_tokens
        tok_correct += out.correct
    n = len(batch)
    total = total * (1.0 / n)
    stats = {
        "l_gen": s_gen / n, "l_gate": s_gate / n, "l_weak": s_weak / n,
        "l_gen_per_token": s_gen / max(tok_sum, 1),
        "gate_mean": gate_sum / max(gate_n, 1),
        "token_accuracy": tok_correct / max(tok_sum, 1),
    }
    return total, stats


def evaluate(model: Model, dataset: list[Example], variant: str = "full") -> dict:
    """Teacher-forced per-token NLL and accuracy on a dataset."""
    nll, toks, correct = 0.0, 0, 0
    for ex in dataset:
        out = model.forward_example(ex, variant=variant)
        nll += float(out.l_gen.data)
        toks += out.n_tokens
        correct += out.correct
    return {"nll_per_token": nll / max(toks, 1),
            "token_accuracy": correct / max(toks, 1)}


def train(model: Model, dataset: list[Example], cfg: TrainConfig,
          log_path: str | None = None, checkpoint_prefix: str | None = None,
          variant: str = "full", on_step=None) -> TrainResult:
    if not dataset:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg)
    result = TrainResult()
    order: list[int] = []
    for step in range(cfg.total_steps):
        if len(order) < cfg.batch_size:
            order.extend(rng.permutation(len(dataset)).tolist())
        batch = [dataset[i] for i in order[:cfg.batch_size]]
        order = order[cfg.batch_size:]
        lr = lr_at(step, cfg)
        opt.zero_grad()
        total, stats = batch_losses(model, batch, cfg, variant)
        if not np.isfinite(total.data):
            dump = [{"src": ex.src_text, "tgt": ex.tgt_text} for ex in batch]
            raise TrainingDiverged("non-finite loss at step %d; batch: %s"
                                   % (step, json.dumps(dump)))
        total.backward()
        opt.step(lr)
        row = {"step": step, "lr": lr, **{k: stats[k] for k in
                                          ("l_gen", "l_gate", "l_weak", "gate_mean")}}
        result.log_rows.append({**row, "l_gen_per_token": stats["l_gen_per_token"],
                                "token_accuracy": stats["token_accuracy"]})
        if on_step is not None:
            on_step(step, stats)
        if checkpoint_prefix and (step + 1) % cfg.checkpoint_every == 0:
            path = "%s-%06d.ckpt" % (checkpoint_prefix, step + 1)
            save_checkpoint(model, path, extra={"step": step + 1})
            result.checkpoints.append(path)
    if log_path:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "lr", "l_gen", "l_gate", "l_weak", "gate_mean"])
            for r in result.log_rows:
                w.writerow([r["step"], "%.8g" % r["lr"], "%.8g" % r["l_gen"],
                            "%.8g" % r["l_gate"], "%.8g" % r["l_weak"],
                            "%.8g" % r["gate_mean"]])
    return result


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(model: Model, path: str, extra: dict | None = None) -> None:
    names = sorted(model.params)
    manifest = json.dumps({
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in names],
        "config": model.cfg.to_dict(),
        "vocab": model.tokenizer.id_to_token,
        "extra": extra or {},
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for k in names:
            fh.write(model.params[k].data.astype("<f4").tobytes())


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (mlen,) = struct.unpack_from("<I", buf, len(CKPT_MAGIC))
    off = len(CKPT_MAGIC) + 4
    manifest = json.loads(buf[off:off + mlen])
    off += mlen
    params: dict[str, Tensor] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        params[entry["name"]] = Tensor(arr.copy(), requires_grad=True)
    cfg = ModelConfig(**manifest["config"])
    from .context_encoder import SPECIALS
    tok = Tokenizer(manifest["vocab"][len(SPECIALS):])
    return Model(cfg, tok, params=params)


def load_dataset(path: str) -> list[dict]:
    """JSON-lines with {"src": ..., "tgt": ...} per line."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "src" not in row or "tgt" not in row:
                raise ValueError("line %d: expected src and tgt keys" % line_no)
            rows.append(row)
    return rows
