"""Gated copy/vocabulary mixture and the greedy/beam decoders."""

import numpy as np
import pytest

from hopgen import autodiff as ad
from hopgen.autodiff import Tensor
from hopgen.context_encoder import EOS
from hopgen.generator import (Hypothesis, concept_scatter_matrix, decode_beam,
                              decode_greedy, mix)


def t64(a, rg=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=rg)


def make_step(seed: int, vocab_size: int):
    """Deterministic pseudo-random step function for decoder tests."""
    def step(prefix):
        key = seed * 1000003 + sum((i + 1) * (t + 1) for i, t in enumerate(prefix))
        rng = np.random.default_rng(key % (2 ** 31))
        logits = rng.normal(size=vocab_size)
        e = np.exp(logits - logits.max())
        return e / e.sum()
    return step


class TestScatter:
    def test_one_hot_rows(self):
        m = concept_scatter_matrix([4, 2], 6)
        assert m.shape == (2, 6)
        np.testing.assert_array_equal(m[0], [0, 0, 0, 0, 1, 0])
        np.testing.assert_array_equal(m[1], [0, 0, 1, 0, 0, 0])

    def test_shared_token_sums_mass(self):
        m = concept_scatter_matrix([3, 3], 5)
        dist = np.array([0.25, 0.75]) @ m
        assert dist[3] == 1.0


class TestMix:
    def test_gate_zero_equals_vocab_softmax(self):
        logits = t64([0.3, -1.2, 2.0])
        scatter = concept_scatter_matrix([1], 3, dtype=np.float64)
        out = mix(logits, t64([1.0]), scatter, t64(0.0))
        np.testing.assert_array_equal(out.probs.numpy(),
                                      ad.softmax(logits).numpy())

    def test_gate_one_single_node_is_one_hot(self):
        # one reached node whose surface is the token "lava" (id 2)
        logits = t64([0.5, 0.1, -3.0, 1.0])
        scatter = concept_scatter_matrix([2], 4, dtype=np.float64)
        out = mix(logits, t64([1.0]), scatter, t64(1.0))
        np.testing.assert_array_equal(out.probs.numpy(), [0.0, 0.0, 1.0, 0.0])

    def test_hand_mixture(self):
        # vocab dist [0.8, 0.2], all node mass on t2, g = 0.5 -> [0.4, 0.6]
        logits = t64(np.log([0.8, 0.2]))
        scatter = concept_scatter_matrix([1], 2, dtype=np.float64)
        out = mix(logits, t64([1.0]), scatter, t64(0.5))
        np.testing.assert_allclose(out.probs.numpy(), [0.4, 0.6], atol=1e-12)
        np.testing.assert_allclose(out.concept_component.numpy(), [0.0, 1.0])

    def test_normalized_for_random_gates(self):
        rng = np.random.default_rng(51)
        for _ in range(20):
            v = int(rng.integers(3, 10))
            n = int(rng.integers(1, 5))
            logits = t64(rng.normal(size=v))
            nd = rng.uniform(size=n)
            nd /= nd.sum()
            scatter = concept_scatter_matrix(
                [int(x) for x in rng.integers(v, size=n)], v, dtype=np.float64)
            out = mix(logits, t64(nd), scatter, t64(float(rng.uniform())))
            assert abs(out.probs.numpy().sum() - 1.0) < 1e-6
            assert (out.probs.numpy() >= 0).all()

    def test_affine_in_gate(self):
        rng = np.random.default_rng(52)
        logits = t64(rng.normal(size=5))
        nd = rng.uniform(size=2)
        nd /= nd.sum()
        scatter = concept_scatter_matrix([0, 3], 5, dtype=np.float64)
        p = {g: mix(logits, t64(nd), scatter, t64(g)).probs.numpy()
             for g in (0.0, 0.5, 1.0)}
        np.testing.assert_allclose(p[0.5], 0.5 * (p[0.0] + p[1.0]), atol=1e-12)

    def test_nll_gradient_through_both_branches(self):
        rng = np.random.default_rng(53)
        scatter = concept_scatter_matrix([1, 3], 5, dtype=np.float64)
        logits = t64(rng.normal(size=5), rg=True)
        raw = t64(rng.normal(size=2), rg=True)
        gate_pre = t64(rng.normal(), rg=True)

        def f(inputs):
            out = mix(inputs[0], ad.softmax(inputs[1]), scatter,
                      ad.sigmoid(inputs[2]))
            return -ad.log(ad.gather(out.probs, [3]).reshape(()), 1e-12)

        res = ad.grad_check(f, [logits, raw, gate_pre])
        assert res["passed"], res


class TestGreedy:
    def test_max_len_zero_empty(self):
        assert decode_greedy(make_step(0, 5), 0) == []

    def test_eos_bias_empty_output(self):
        def step(prefix):
            p = np.full(4, 1e-6)
            p[EOS] = 1.0
            return p / p.sum()
        assert decode_greedy(step, 10) == []

    def test_follows_argmax(self):
        table = {(): 3, (3,): 2, (3, 2): EOS}

        def step(prefix):
            p = np.full(5, 0.01)
            p[table[tuple(prefix)]] = 1.0
            return p / p.sum()
        assert decode_greedy(step, 10) == [3, 2]


class TestBeam:
    def test_beam_must_be_positive(self):
        with pytest.raises(ValueError, match="beam"):
            decode_beam(make_step(0, 5), 0, 4)

    def test_beam_one_equals_greedy(self):
        for seed in range(5):
            step = make_step(seed, 6)
            greedy = decode_greedy(step, 8)
            top = decode_beam(step, 1, 8)[0]
            assert top.tokens == greedy

    def test_beam_three_dominates_greedy_score(self):
        for seed in range(5):
            step = make_step(seed + 100, 6)
            greedy = decode_greedy(step, 6)
            # score the greedy hypothesis the way the beam does
            logprob, finished = 0.0, False
            for i, tok in enumerate(greedy):
                logprob += float(np.log(step(greedy[:i])[tok]))
            if len(greedy) < 6:
                logprob += float(np.log(step(greedy)[EOS]))
                finished = True
            g_score = Hypothesis(greedy, logprob, finished).score
            assert decode_beam(step, 3, 6)[0].score >= g_score - 1e-12

    def test_finished_hypotheses_leave_the_beam(self):
        # after [eos] is the best continuation, the hypothesis is retired
        def step(prefix):
            p = np.full(4, 0.05)
            p[EOS] = 0.85
            return p / p.sum()
        hyps = decode_beam(step, 2, 5)
        assert hyps[0].tokens == [] and hyps[0].finished

    def test_score_length_normalization(self):
        h = Hypothesis([5, 6], -1.0, True)
        assert h.score == -1.0 / 3
        assert Hypothesis([], 0.0, False).score == 0.0
