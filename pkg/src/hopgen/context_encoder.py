"""Word-level tokenizer and a small causal transformer LM.

The encoder runs over the concatenated sequence (x, [bos], y) and exposes
per-position hidden states plus vocabulary logits. Pre-norm residual
blocks with GELU feed-forward; positions are numbered continuously over
the whole sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

BOS, EOS, PAD, UNK = 0, 1, 2, 3
SPECIALS = ["[bos]", "[eos]", "[pad]", "[unk]"]


class Tokenizer:
    """Lowercase whitespace tokenizer over a fixed vocabulary."""

    def __init__(self, words: list[str]):
        self.id_to_token = SPECIALS + list(words)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(w, UNK) for w in text.lower().split()]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.id_to_token[i] for i in ids)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.id_to_token[len(SPECIALS):]:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path: str) -> "Tokenizer":
        with open(path, encoding="utf-8") as fh:
            words = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(words)

    @classmethod
    def from_corpus(cls, texts) -> "Tokenizer":
        seen = {}
        for text in texts:
            for w in text.lower().split():
                seen.setdefault(w, len(seen))
        return cls(sorted(seen, key=seen.get))


@dataclass
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")


def build_sequence(x: list[int], y: list[int], max_len: int) -> list[int]:
    """(x_1..x_N, [bos], y_1..y_M); errors past max_len."""
    if len(x) < 1:
        raise ValueError("source sequence must be nonempty")
    s = list(x) + [BOS] + list(y)
    if len(s) > max_len:
        raise ValueError("sequence length %d exceeds max_len %d" % (len(s), max_len))
    return s


def init_params(cfg: EncoderConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, Tensor]:
    """Parameter dict; names are stable for checkpointing."""
    def p(name, shape, scale=0.02):
        return name, Tensor(rng.normal(0.0, scale, shape).astype(dtype), requires_grad=True)

    params = dict([
        p("tok_emb", (cfg.vocab_size, cfg.d_model)),
        p("pos_emb", (cfg.max_len, cfg.d_model)),
    ])
    for l in range(cfg.n_layers):
        pre = "block%d." % l
        params.update(dict([
            p(pre + "ln1_g", (cfg.d_model,), 0.0),
            p(pre + "ln1_b", (cfg.d_model,), 0.0),
            p(pre + "w_qkv", (cfg.d_model, 3 * cfg.d_model)),
            p(pre + "b_qkv", (3 * cfg.d_model,), 0.0),
            p(pre + "w_o", (cfg.d_model, cfg.d_model)),
            p(pre + "b_o", (cfg.d_model,), 0.0),
            p(pre + "ln2_g", (cfg.d_model,), 0.0),
            p(pre + "ln2_b", (cfg.d_model,), 0.0),
            p(pre + "w_ff1", (cfg.d_model, cfg.d_ff)),
            p(pre + "b_ff1", (cfg.d_ff,), 0.0),
            p(pre + "w_ff2", (cfg.d_ff, cfg.d_model)),
            p(pre + "b_ff2", (cfg.d_model,), 0.0),
        ]))
        # layer-norm gains start at 1
        params[pre + "ln1_g"].data += 1.0
        params[pre + "ln2_g"].data += 1.0
    params.update(dict([
        p("ln_f_g", (cfg.d_model,), 0.0),
        p("ln_f_b", (cfg.d_model,), 0.0),
        p("w_lm", (cfg.d_model, cfg.vocab_size)),
        p("b_lm", (cfg.vocab_size,), 0.0),
    ]))
    params["ln_f_g"].data += 1.0
    return params


def _attention(x: Tensor, params: dict, pre: str, cfg: EncoderConfig,
               pad_mask: np.ndarray | None) -> Tensor:
    T = x.shape[0]
    h, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
    qkv = x @ params[pre + "w_qkv"] + params[pre + "b_qkv"]       # T x 3d
    qkv = qkv.reshape(T, 3, h, dh).transpose(1, 2, 0, 3)          # 3 x h x T x dh
    q = ad.gather(qkv, [0]).reshape(h, T, dh)
    k = ad.gather(qkv, [1]).reshape(h, T, dh)
    v = ad.gather(qkv, [2]).reshape(h, T, dh)
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh))     # h x T x T
    causal = np.triu(np.full((T, T), -np.inf, dtype=x.dtype), k=1)
    mask = causal[None, :, :]
    if pad_mask is not None:
        key_pad = np.where(pad_mask, 0.0, -np.inf).astype(x.dtype)
        mask = mask + key_pad[None, None, :]
    att = ad.softmax(scores, axis=-1, mask=mask)
    out = (att @ v).transpose(1, 0, 2).reshape(T, cfg.d_model)
    return out @ params[pre + "w_o"] + params[pre + "b_o"]


def forward(s: list[int], params: dict, cfg: EncoderConfig,
            pad_mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Returns (hidden T x d, logits T x vocab). hidden[t] depends only on
    s[<= t]; logits row t parameterizes P(s_{t+1} | s_{<= t})."""
    for tok in s:
        if not 0 <= tok < cfg.vocab_size:
            raise ValueError("token id %d outside vocabulary of %d" % (tok, cfg.vocab_size))
    T = len(s)
    if T > cfg.max_len:
        raise ValueError("sequence length %d exceeds max_len %d" % (T, cfg.max_len))
    x = ad.gather(params["tok_emb"], s) + ad.gather(params["pos_emb"], list(range(T)))
    for l in range(cfg.n_layers):
        pre = "block%d." % l
        x = x + _attention(
            ad.layer_norm(x, params[pre + "ln1_g"], params[pre + "ln1_b"]),
            params, pre, cfg, pad_mask)
        y = ad.layer_norm(x, params[pre + "ln2_g"], params[pre + "ln2_b"])
        y = ad.gelu(y @ params[pre + "w_ff1"] + params[pre + "b_ff1"])
        x = x + (y @ params[pre + "w_ff2"] + params[pre + "b_ff2"])
    hidden = ad.layer_norm(x, params["ln_f_g"], params["ln_f_b"])
    logits = hidden @ params["w_lm"] + params["b_lm"]
    return hidden, logits
