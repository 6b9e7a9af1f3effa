"""Tokenizer and the causal transformer over (x, [bos], y)."""

import numpy as np
import pytest

from hopgen import autodiff as ad
from hopgen import context_encoder as ctx
from hopgen.autodiff import Tensor
from hopgen.context_encoder import (BOS, EOS, PAD, UNK, EncoderConfig,
                                    SPECIALS, Tokenizer, build_sequence)


class TestTokenizer:
    def test_specials_occupy_fixed_ids(self):
        tok = Tokenizer(["lava"])
        assert (BOS, EOS, PAD, UNK) == (0, 1, 2, 3)
        assert tok.id_to_token[:4] == SPECIALS
        assert tok.token_to_id["lava"] == 4

    def test_encode_decode_round_trip(self):
        tok = Tokenizer(["hot", "lava", "flows"])
        ids = tok.encode("Lava flows HOT")
        assert tok.decode(ids) == "lava flows hot"

    def test_unknown_maps_to_unk(self):
        tok = Tokenizer(["lava"])
        assert tok.encode("zzzq lava") == [UNK, tok.token_to_id["lava"]]

    def test_duplicate_vocab_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            Tokenizer(["a", "a"])

    def test_save_load_round_trip(self, tmp_path):
        tok = Tokenizer(["x", "y", "z"])
        p = tmp_path / "vocab.txt"
        tok.save(str(p))
        assert Tokenizer.load(str(p)).id_to_token == tok.id_to_token

    def test_from_corpus_first_seen_order(self):
        tok = Tokenizer.from_corpus(["b a", "a c"])
        assert tok.id_to_token[len(SPECIALS):] == ["b", "a", "c"]


class TestBuildSequence:
    def test_concatenation_with_bos(self):
        assert build_sequence([5, 6], [7], 16) == [5, 6, BOS, 7]

    def test_empty_target_for_inference_start(self):
        assert build_sequence([5, 6], [], 16) == [5, 6, BOS]

    def test_boundary_length_ok(self):
        assert len(build_sequence([5], [], 2)) == 2

    def test_over_length_rejected(self):
        with pytest.raises(ValueError, match="max_len"):
            build_sequence([5, 6], [7], 3)

    def test_empty_source_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            build_sequence([], [7], 16)


def small_cfg(vocab=8):
    return EncoderConfig(vocab_size=vocab, d_model=8, n_heads=2, n_layers=2,
                         d_ff=16, max_len=10)


def params64(cfg, seed=0):
    return ctx.init_params(cfg, np.random.default_rng(seed), dtype=np.float64)


class TestForward:
    def test_causality_prefix_bit_identical(self):
        cfg = small_cfg()
        params = params64(cfg)
        s1 = [4, 5, 6, 7, 4, 5, 6]
        s2 = list(s1)
        s2[5] = 7
        h1, _ = ctx.forward(s1, params, cfg)
        h2, _ = ctx.forward(s2, params, cfg)
        assert h1.numpy()[:5].tobytes() == h2.numpy()[:5].tobytes()
        assert not np.array_equal(h1.numpy()[5], h2.numpy()[5])

    def test_single_token_shapes(self):
        cfg = small_cfg()
        h, logits = ctx.forward([4], params64(cfg), cfg)
        assert h.shape == (1, cfg.d_model)
        assert logits.shape == (1, cfg.vocab_size)

    def test_logit_softmax_normalized(self):
        cfg = small_cfg()
        _, logits = ctx.forward([4, 5, 6], params64(cfg), cfg)
        probs = ad.softmax(logits, axis=-1).numpy()
        np.testing.assert_allclose(probs.sum(axis=-1), np.ones(3), atol=1e-6)

    def test_token_out_of_vocab_rejected(self):
        cfg = small_cfg()
        with pytest.raises(ValueError, match="outside vocabulary"):
            ctx.forward([99], params64(cfg), cfg)

    def test_sequence_too_long_rejected(self):
        cfg = small_cfg()
        with pytest.raises(ValueError, match="max_len"):
            ctx.forward([4] * 11, params64(cfg), cfg)

    def test_output_head_untied_from_embeddings(self):
        cfg = small_cfg()
        params = params64(cfg)
        assert params["w_lm"].data.base is None or \
            params["w_lm"].data is not params["tok_emb"].data
        loss = ad.cross_entropy(ctx.forward([4, 5], params, cfg)[1], [5, 6])
        loss.backward()
        assert params["w_lm"].grad is not None
        assert params["tok_emb"].grad is not None
        assert params["w_lm"].grad.shape != params["tok_emb"].grad.shape or \
            not np.array_equal(params["w_lm"].grad, params["tok_emb"].grad)

    def test_lm_loss_grad_check(self):
        cfg = EncoderConfig(vocab_size=6, d_model=4, n_heads=2, n_layers=1,
                            d_ff=8, max_len=6)
        params = params64(cfg, seed=5)
        names = sorted(params)
        s, tgt = [4, 5, 4], [5, 4, 1]

        def f(inputs):
            p = dict(zip(names, inputs))
            _, logits = ctx.forward(s, p, cfg)
            return ad.cross_entropy(logits, tgt)

        res = ad.grad_check(f, [params[k] for k in names])
        assert res["passed"], res

    def test_determinism(self):
        cfg = small_cfg()
        params = params64(cfg, seed=2)
        a = ctx.forward([4, 5, 6], params, cfg)[1].numpy().tobytes()
        b = ctx.forward([4, 5, 6], params, cfg)[1].numpy().tobytes()
        assert a == b
