"""Corpus BLEU-n and Distinct-n.

Scores use the project tokenizer, so they are internal consistency tools
rather than numbers comparable across papers.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass


@dataclass
class EvalPair:
    hypothesis: list[str]
    references: list[list[str]]

    def __post_init__(self):
        if not self.references:
            raise ValueError("at least one reference is required")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(pairs: list[EvalPair], n: int, smooth: bool = False) -> float:
    """Corpus BLEU: clipped n-gram precision, geometric mean over orders
    <= n, brevity penalty with closest-reference length. `smooth` adds +1
    to numerator and denominator (sentence-level debugging aid)."""
    if not pairs:
        raise ValueError("empty hypothesis set")
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    matched = [0] * n
    total = [0] * n
    hyp_len = 0
    ref_len = 0
    for pair in pairs:
        hyp = pair.hypothesis
        hyp_len += len(hyp)
        # closest reference length; ties go to the shorter reference
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in pair.references)[1]
        for k in range(1, n + 1):
            hyp_counts = _ngrams(hyp, k)
            max_ref = Counter()
            for ref in pair.references:
                for gram, c in _ngrams(ref, k).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            matched[k - 1] += sum(min(c, max_ref[gram]) for gram, c in hyp_counts.items())
            total[k - 1] += sum(hyp_counts.values())
    log_precisions = []
    for k in range(n):
        num, den = matched[k], total[k]
        if smooth:
            num, den = num + 1, den + 1
        if den == 0 or num == 0:
            return 0.0
        log_precisions.append(math.log(num / den))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len) if hyp_len > 0 else 0.0
    return bp * math.exp(sum(log_precisions) / n)


def distinct(hypotheses: list[list[str]], n: int) -> float:
    """(# unique n-grams) / (# total n-grams) across all hypotheses."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = set()
    total = 0
    for hyp in hypotheses:
        for i in range(len(hyp) - n + 1):
            seen.add(tuple(hyp[i:i + n]))
            total += 1
    if total == 0:
        warnings.warn("no n-grams of order %d; distinct defined as 0" % n)
        return 0.0
    return len(seen) / total
