"""Corpus BLEU-n and Distinct-n."""

import numpy as np
import pytest

from hopgen.metrics import EvalPair, bleu, distinct

from oracles import corpus_bleu_oracle


def pair(hyp: str, *refs: str) -> EvalPair:
    return EvalPair(hypothesis=hyp.split(), references=[r.split() for r in refs])


class TestBleu:
    def test_identity_is_one(self):
        assert bleu([pair("a b c", "a b c")], 1) == 1.0
        assert bleu([pair("a b c", "a b c")], 2) == 1.0

    def test_hand_clipped_precision(self):
        # hyp "a a", ref "a b": clip count 1 of 2, BP = 1
        assert bleu([pair("a a", "a b")], 1) == pytest.approx(0.5, abs=1e-12)

    def test_disjoint_unigrams_zero(self):
        assert bleu([pair("x y", "a b")], 1) == 0.0

    def test_smoothing_avoids_zero(self):
        assert bleu([pair("x y", "a b")], 1) == 0.0
        assert bleu([pair("x y", "a b")], 1, smooth=True) > 0.0

    def test_brevity_penalty(self):
        # 1 of 1 unigram matched, hyp len 1 vs ref len 2 -> BP = e^(1-2)
        assert bleu([pair("a", "a b")], 1) == pytest.approx(np.exp(-1.0))

    def test_closest_reference_tie_goes_shorter(self):
        # hyp len 2; refs len 1 and len 3 tie on distance -> ref_len 1 -> BP 1
        assert bleu([pair("a b", "a", "a b c")], 1) == 1.0

    def test_multi_reference_clip_uses_max_count(self):
        assert bleu([pair("a a", "a a c", "a b")], 1) == 1.0

    def test_pair_order_invariance(self):
        pairs = [pair("a b", "a c"), pair("x", "x y"), pair("m n o", "m o")]
        for n in (1, 2):
            assert bleu(pairs, n) == bleu(list(reversed(pairs)), n)

    def test_matches_independent_oracle_on_random_corpora(self):
        rng = np.random.default_rng(61)
        words = list("abcdefg")
        for _ in range(20):
            pairs = []
            for _ in range(int(rng.integers(1, 5))):
                hyp = [words[i] for i in rng.integers(len(words),
                                                      size=int(rng.integers(1, 8)))]
                refs = [[words[i] for i in rng.integers(len(words),
                                                        size=int(rng.integers(1, 8)))]
                        for _ in range(int(rng.integers(1, 3)))]
                pairs.append(EvalPair(hypothesis=hyp, references=refs))
            for n in (1, 2, 3):
                expected = corpus_bleu_oracle([p.hypothesis for p in pairs],
                                              [p.references for p in pairs], n)
                assert bleu(pairs, n) == pytest.approx(expected, abs=1e-12)

    def test_empty_pairs_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            bleu([], 1)

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError, match="1..4"):
            bleu([pair("a", "a")], 5)

    def test_missing_reference_rejected(self):
        with pytest.raises(ValueError, match="reference"):
            EvalPair(hypothesis=["a"], references=[])


class TestDistinct:
    def test_hand_bigram_count(self):
        # "a b a b": bigrams (a,b),(b,a),(a,b) -> 2 unique of 3
        assert distinct([["a", "b", "a", "b"]], 2) == pytest.approx(2 / 3,
                                                                    abs=1e-12)

    def test_all_unique(self):
        assert distinct([["a", "b"], ["c", "d"]], 2) == 1.0

    def test_repeated_token_unigrams(self):
        assert distinct([["a", "a", "a"]], 1) == pytest.approx(1 / 3, abs=1e-12)

    def test_no_ngrams_warns_and_returns_zero(self):
        with pytest.warns(UserWarning, match="no n-grams"):
            assert distinct([["a"]], 2) == 0.0

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            distinct([["a"]], 0)
