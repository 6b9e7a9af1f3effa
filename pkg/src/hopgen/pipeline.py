"""High-level wiring shared by the CLI and the HTTP service: load a trained
bundle, ground input text, decode, trace reasoning paths, evaluate files."""

from __future__ import annotations

from dataclasses import dataclass

from . import flow as flow_mod
from . import kg as kg_mod
from .config import RunConfig
from .generator import Hypothesis, decode_beam
from .grounding import ExtractionConfig, Lexicons, extract_subgraph, match_concepts
from .metrics import EvalPair, bleu, distinct
from .model import Model
from .training import load_checkpoint


@dataclass
class GenerationBundle:
    model: Model
    kg: kg_mod.KnowledgeGraph
    lexicons: Lexicons
    extraction: ExtractionConfig

    @classmethod
    def load(cls, checkpoint_path: str, graph_path: str,
             lexicons: Lexicons | None = None,
             extraction: ExtractionConfig | None = None) -> "GenerationBundle":
        model = load_checkpoint(checkpoint_path)
        kg = kg_mod.load(graph_path)
        if model.cfg.num_relation_codes != kg.num_relation_codes:
            raise ValueError(
                "checkpoint/graph mismatch: %d vs %d relation codes"
                % (model.cfg.num_relation_codes, kg.num_relation_codes))
        return cls(model=model, kg=kg, lexicons=lexicons or Lexicons(),
                   extraction=extraction or ExtractionConfig())

    def ground(self, text: str):
        mentions = match_concepts(text.lower().split(), self.kg, self.lexicons,
                                  pos_filter=self.extraction.pos_filter)
        return extract_subgraph(self.kg, {m.concept for m in mentions},
                                self.extraction)

    def generate(self, text: str, beam: int = 3,
                 max_len: int = 32) -> list[Hypothesis]:
        g = self.ground(text)
        x = self.model.tokenizer.encode(text)
        step = self.model.make_stepper(x, g)
        return decode_beam(step, beam, max_len)

    def trace(self, text: str, top_k: int = 3, max_len: int = 32) -> list[dict]:
        """Greedy-decode and record gate + top-k reasoning paths per step."""
        g = self.ground(text)
        x = self.model.tokenizer.encode(text)
        step = self.model.make_stepper(x, g)
        records = []
        tokens: list[int] = []
        from .context_encoder import EOS
        import numpy as np
        while len(tokens) < max_len:
            probs = step(tokens)
            out = step.last["output"]
            paths = flow_mod.trace_paths(out.flow_state, g, top_k)
            tok = int(np.argmax(probs))
            records.append({
                "step": len(tokens),
                "token": self.model.tokenizer.id_to_token[tok],
                "gate": float(out.mixed.gate.data),
                "paths": flow_mod.format_trace(paths, g, self.kg.relation_name),
            })
            if tok == EOS:
                break
            tokens.append(tok)
        return records

    def hypothesis_text(self, hyp: Hypothesis) -> str:
        return self.model.tokenizer.decode(hyp.tokens)


def evaluate_files(hyp_lines: list[str], ref_lines: list[str],
                   bleu_orders=(1, 2), distinct_orders=(2, 3)) -> dict:
    """Hypotheses one per line; references tab-separated for multi-ref."""
    if len(hyp_lines) != len(ref_lines):
        raise ValueError("hypothesis and reference counts differ: %d vs %d"
                         % (len(hyp_lines), len(ref_lines)))
    pairs = [EvalPair(hypothesis=h.lower().split(),
                      references=[r.lower().split() for r in refs.split("\t")])
             for h, refs in zip(hyp_lines, ref_lines)]
    report = {}
    for n in bleu_orders:
        report["bleu-%d" % n] = bleu(pairs, n)
    hyps = [p.hypothesis for p in pairs]
    for n in distinct_orders:
        report["distinct-%d" % n] = distinct(hyps, n)
    return report


def run_config_extraction(cfg: RunConfig) -> ExtractionConfig:
    return ExtractionConfig(hops=cfg.extraction.hops, top_b=cfg.extraction.top_b,
                            pos_filter=cfg.extraction.pos_filter)
