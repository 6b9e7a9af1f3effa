"""Copy/vocabulary mixture under a soft gate, plus greedy and beam decoding.

Decoding is written against a step function `prefix -> probabilities over
the vocabulary`, so the search code is independent of the model that
produces the distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .context_encoder import EOS


@dataclass
class MixedDistribution:
    probs: Tensor                  # over the full vocabulary
    gate: Tensor                   # scalar g
    concept_component: Tensor      # node distribution mapped onto token ids


def concept_scatter_matrix(node_token_ids: Sequence[int], vocab_size: int,
                           dtype=np.float32) -> np.ndarray:
    """num_nodes x vocab one-hot map from reached-node order to token ids.
    Nodes sharing a token id sum their mass (cannot happen with a bijective
    lemma vocabulary; kept for robustness)."""
    m = np.zeros((len(node_token_ids), vocab_size), dtype=dtype)
    for i, t in enumerate(node_token_ids):
        m[i, t] = 1.0
    return m


def mix(vocab_logits: Tensor, node_dist: Tensor, scatter: np.ndarray,
        gate: Tensor) -> MixedDistribution:
    """probs = g * (node mass per token) + (1 - g) * softmax(vocab_logits)."""
    vocab_probs = ad.softmax(vocab_logits, axis=-1)
    concept_probs = node_dist @ Tensor(scatter)
    one = Tensor(np.asarray(1.0, dtype=gate.dtype))
    probs = gate * concept_probs + (one - gate) * vocab_probs
    return MixedDistribution(probs=probs, gate=gate, concept_component=concept_probs)


StepFn = Callable[[list[int]], np.ndarray]


def decode_greedy(step_fn: StepFn, max_len: int) -> list[int]:
    """Argmax decoding; stops at [eos] (not emitted) or max_len tokens."""
    out: list[int] = []
    while len(out) < max_len:
        probs = step_fn(out)
        tok = int(np.argmax(probs))
        if tok == EOS:
            break
        out.append(tok)
    return out


@dataclass
class Hypothesis:
    tokens: list[int]              # without [eos]
    logprob: float
    finished: bool

    @property
    def score(self) -> float:
        # length-normalized: log-prob per generated token ([eos] included)
        n = len(self.tokens) + (1 if self.finished else 0)
        return self.logprob / max(n, 1)


def decode_beam(step_fn: StepFn, beam: int, max_len: int) -> list[Hypothesis]:
    """Length-normalized beam search; finished hypotheses leave the beam."""
    if beam < 1:
        raise ValueError("beam must be >= 1")
    active = [Hypothesis([], 0.0, False)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        candidates: list[tuple[float, int, int, Hypothesis]] = []
        for h_idx, hyp in enumerate(active):
            probs = step_fn(hyp.tokens)
            logp = np.log(np.maximum(probs, 1e-300))
            order = np.argsort(-logp, kind="stable")[:beam]
            for tok in order:
                candidates.append((hyp.logprob + float(logp[tok]), int(tok), h_idx, hyp))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        active = []
        for total, tok, _h, hyp in candidates[:beam]:
            if tok == EOS:
                finished.append(Hypothesis(hyp.tokens, total, True))
            else:
                active.append(Hypothesis(hyp.tokens + [tok], total, False))
        if not active:
            break
    # hypotheses cut off by max_len still count, ranked below by their score
    finished.extend(active)
    finished.sort(key=lambda h: (-h.score, h.tokens))
    return finished[:beam] if finished else [Hypothesis([], 0.0, False)]
