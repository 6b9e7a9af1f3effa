"""Full model bundle: context encoder + graph encoder + reasoning flow +
gated copy mixture, with the per-example loss assembly used in training.

Ablation variants:
  * "no_dmrf": node distribution replaced by uniform over reached nodes
  * "no_smge": relational layers skipped; raw initial embeddings are used
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import context_encoder as ctx
from . import graph_encoder as gnn
from . import flow as flow_mod
from .autodiff import Tensor
from .context_encoder import Tokenizer, BOS, UNK
from .flow import FlowConfig, FlowState
from .generator import concept_scatter_matrix, mix, MixedDistribution
from .grounding import SubGraph

LOG_FLOOR = 1e-12
VARIANTS = ("full", "no_dmrf", "no_smge")


@dataclass
class ModelConfig:
    vocab_size: int
    num_relation_codes: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 128
    d_g: int = 64
    gnn_layers: int = 2
    gamma: float = 0.5
    aggregator: str = "max"
    flow_hops: int = 2

    def encoder_config(self) -> ctx.EncoderConfig:
        return ctx.EncoderConfig(vocab_size=self.vocab_size, d_model=self.d_model,
                                 n_heads=self.n_heads, n_layers=self.n_layers,
                                 d_ff=self.d_ff, max_len=self.max_len)

    def graph_config(self) -> gnn.GraphEncoderConfig:
        return gnn.GraphEncoderConfig(d_g=self.d_g, layers=self.gnn_layers,
                                      num_relation_codes=self.num_relation_codes)

    def flow_config(self) -> FlowConfig:
        return FlowConfig(gamma=self.gamma, aggregator=self.aggregator,
                          hops=self.flow_hops)

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(cfg: ModelConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, Tensor]:
    params = ctx.init_params(cfg.encoder_config(), rng, dtype)
    params.update(gnn.init_params(cfg.graph_config(), rng, dtype))
    params["w_sim"] = Tensor(rng.normal(0.0, 0.02, (3 * cfg.d_g, cfg.d_model)).astype(dtype),
                             requires_grad=True)
    params["w_gate"] = Tensor(rng.normal(0.0, 0.02, (cfg.d_model,)).astype(dtype),
                              requires_grad=True)
    if cfg.d_g != cfg.d_model:
        params["w_node_proj"] = Tensor(
            rng.normal(0.0, 0.02, (cfg.d_model, cfg.d_g)).astype(dtype), requires_grad=True)
    return params


@dataclass
class StepOutput:
    mixed: MixedDistribution
    flow_state: FlowState | None


@dataclass
class ExampleLosses:
    l_gen: Tensor                 # summed over target tokens (includes [eos])
    l_gate: Tensor
    l_weak: Tensor
    n_tokens: int
    gates: Tensor                 # per target step
    correct: int                  # teacher-forced argmax hits


def _bce(p: Tensor, labels: np.ndarray) -> Tensor:
    y = Tensor(np.asarray(labels, dtype=p.dtype))
    one = Tensor(np.ones_like(p.data))
    return -(y * ad.log(p, LOG_FLOOR) + (one - y) * ad.log(one - p, LOG_FLOOR)).mean()


class Model:
    def __init__(self, cfg: ModelConfig, tokenizer: Tokenizer,
                 params: dict[str, Tensor] | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if cfg.vocab_size != tokenizer.vocab_size:
            raise ValueError("config vocab_size does not match tokenizer")
        self.cfg = cfg
        self.tokenizer = tokenizer
        self.dtype = dtype
        if params is None:
            params = init_params(cfg, rng or np.random.default_rng(0), dtype)
        self.params = params

    # -- shared pieces ----------------------------------------------------

    def node_token_ids(self, g: SubGraph) -> list[int]:
        return [self.tokenizer.token_to_id.get(s, UNK) for s in g.surfaces]

    def node_init(self, g: SubGraph, params: dict) -> Tensor:
        emb = ad.gather(params["tok_emb"], self.node_token_ids(g))
        if self.cfg.d_g != self.cfg.d_model:
            emb = emb @ params["w_node_proj"]
        return emb

    def encode_graph(self, g: SubGraph, params: dict, variant: str) -> gnn.GraphEncoding:
        init = self.node_init(g, params)
        if variant == "no_smge":
            return gnn.GraphEncoding(node_states=init, relation_states=params["rel_emb"])
        return gnn.encode(g, init, params, self.cfg.graph_config())

    def _mixture_at(self, g: SubGraph, scatter: np.ndarray, relevance_row: Tensor | None,
                    vocab_logits_t: Tensor, gate_t: Tensor, variant: str) -> StepOutput:
        fcfg = self.cfg.flow_config()
        if relevance_row is None:
            # edgeless subgraph: only sources are reached, all at score 1
            state = flow_mod.propagate(g, None, None, fcfg,
                                       relevance=Tensor(np.zeros(0, dtype=self.dtype)))
        else:
            state = flow_mod.propagate(g, None, None, fcfg, relevance=relevance_row)
        if variant == "no_dmrf":
            n = len(state.reached)
            node_dist = Tensor(np.full(n, 1.0 / n, dtype=self.dtype))
        else:
            node_dist = flow_mod.node_distribution(state)
        reached_scatter = scatter[state.reached, :]
        mixed = mix(vocab_logits_t, node_dist, reached_scatter, gate_t)
        return StepOutput(mixed=mixed, flow_state=state)

    # -- training forward -------------------------------------------------

    def forward_example(self, ex, params: dict | None = None,
                        variant: str = "full") -> ExampleLosses:
        """Teacher-forced losses for one example.

        `ex` needs: x (source ids), y_gold (target ids, [eos] last),
        subgraph, gate_labels, weak_edge_labels.
        """
        if variant not in VARIANTS:
            raise ValueError("unknown variant %r" % variant)
        params = params or self.params
        g: SubGraph = ex.subgraph
        x, y_gold = ex.x, ex.y_gold
        n_src = len(x)
        s = ctx.build_sequence(x, y_gold[:-1], self.cfg.max_len)
        hidden, logits = ctx.forward(s, params, self.cfg.encoder_config())
        steps = len(y_gold)
        positions = list(range(n_src, n_src + steps))
        h_steps = ad.gather(hidden, positions)            # steps x d
        logits_steps = ad.gather(logits, positions)       # steps x vocab
        gates = ad.sigmoid(h_steps @ params["w_gate"])    # steps

        enc = self.encode_graph(g, params, variant)
        scatter = concept_scatter_matrix(self.node_token_ids(g),
                                         self.cfg.vocab_size, self.dtype)
        has_edges = len(g.edges) > 0
        if has_edges:
            rel = flow_mod.relevance_matrix(g, enc, h_steps, params["w_sim"])  # E x steps
            rel_t = rel.T                                                      # steps x E
        else:
            rel = rel_t = None

        nll_terms = []
        correct = 0
        for t, gold in enumerate(y_gold):
            row = ad.gather(rel_t, [t]).reshape(-1) if has_edges else None
            gate_t = ad.gather(gates, [t]).reshape(())
            logits_t = ad.gather(logits_steps, [t]).reshape(-1)
            out = self._mixture_at(g, scatter, row, logits_t, gate_t, variant)
            p_gold = ad.gather(out.mixed.probs, [gold]).reshape(())
            nll_terms.append(-ad.log(p_gold, LOG_FLOOR))
            if int(np.argmax(out.mixed.probs.data)) == gold:
                correct += 1
        l_gen = ad.stack(nll_terms).sum()

        l_gate = _bce(gates, ex.gate_labels)
        if has_edges:
            labels = np.repeat(np.asarray(ex.weak_edge_labels, dtype=self.dtype)[:, None],
                               steps, axis=1)
            l_weak = _bce(rel, labels)
        else:
            l_weak = Tensor(np.asarray(0.0, dtype=self.dtype))
        return ExampleLosses(l_gen=l_gen, l_gate=l_gate, l_weak=l_weak,
                             n_tokens=steps, gates=gates, correct=correct)

    # -- inference --------------------------------------------------------

    def detached_params(self) -> dict[str, Tensor]:
        return {k: Tensor(v.data) for k, v in self.params.items()}

    def make_stepper(self, x: list[int], g: SubGraph, variant: str = "full"):
        """Step function for the decoders: prefix tokens -> probs (numpy).
        Also records the last StepOutput for tracing."""
        params = self.detached_params()
        enc = self.encode_graph(g, params, variant)
        scatter = concept_scatter_matrix(self.node_token_ids(g),
                                         self.cfg.vocab_size, self.dtype)
        has_edges = len(g.edges) > 0
        last: dict = {}

        def step(prefix: list[int]) -> np.ndarray:
            s = list(x) + [BOS] + list(prefix)
            hidden, logits = ctx.forward(s, params, self.cfg.encoder_config())
            h_t = ad.gather(hidden, [len(s) - 1]).reshape(-1)
            logits_t = ad.gather(logits, [len(s) - 1]).reshape(-1)
            gate_t = ad.sigmoid(h_t @ params["w_gate"]).reshape(())
            if has_edges:
                row = flow_mod.relevance_matrix(
                    g, enc, h_t.reshape(1, -1), params["w_sim"]).reshape(-1)
            else:
                row = None
            out = self._mixture_at(g, scatter, row, logits_t, gate_t, variant)
            last["output"] = out
            return out.mixed.probs.data

        step.last = last
        return step
