"""Question encoder: embedding lookup, two stacked recurrent layers,
dropout, and a dense projection to the fixed question dimension."""

from __future__ import annotations

import string
import warnings
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import EmbeddingTable, embed_word
from .errors import ContractError
from .layers import LayerParams, dense_apply, dense_params, dropout, lstm_params, lstm_step

MAX_QUESTION_LEN = 30

_PUNCT = str.maketrans("", "", string.punctuation)


@dataclass
class QuestionEncoderParams:
    lstm1: LayerParams
    lstm2: LayerParams
    proj: LayerParams
    hidden: int
    q_dim: int
    dropout_rate: float = 0.5

    @classmethod
    def create(cls, emb_dim: int, hidden: int = 256, q_dim: int = 1024,
               rng: np.random.Generator | None = None, dtype=np.float32,
               dropout_rate: float = 0.5) -> "QuestionEncoderParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(
            lstm1=lstm_params(emb_dim, hidden, rng, dtype),
            lstm2=lstm_params(hidden, hidden, rng, dtype),
            proj=dense_params(hidden, q_dim, rng, dtype),
            hidden=hidden,
            q_dim=q_dim,
            dropout_rate=dropout_rate,
        )

    def named_params(self, prefix: str = "question") -> list[tuple[str, Tensor]]:
        out = []
        for layer_name, layer in (("lstm1", self.lstm1), ("lstm2", self.lstm2),
                                  ("proj", self.proj)):
            for t_name, t in layer.tensors():
                out.append((f"{prefix}.{layer_name}.{t_name}", t))
        return out


def normalize_words(words: list[str]) -> list[str]:
    """Lowercase and strip punctuation; drops words that become empty."""
    out = []
    for w in words:
        w = w.lower().translate(_PUNCT).strip()
        if w:
            out.append(w)
    return out


def encode_question(params: QuestionEncoderParams, table: EmbeddingTable,
                    question: list[str], mode: str = "eval",
                    rng: np.random.Generator | None = None) -> Tensor:
    """Run the word sequence through the recurrent stack from zero state
    and project the final hidden state to the question dimension."""
    if not question:
        raise ContractError("encode_question: empty question")
    words = normalize_words(question)
    if not words:
        # nothing survives normalization; embed the raw tokens instead
        words = [w for w in question if w]
    if len(words) > MAX_QUESTION_LEN:
        warnings.warn(
            f"question truncated from {len(words)} to {MAX_QUESTION_LEN} words",
            stacklevel=2,
        )
        words = words[:MAX_QUESTION_LEN]

    dtype = params.proj.weight.data.dtype
    hid = params.hidden
    h1 = ag.constant(np.zeros(hid, dtype=dtype))
    c1 = ag.constant(np.zeros(hid, dtype=dtype))
    h2 = ag.constant(np.zeros(hid, dtype=dtype))
    c2 = ag.constant(np.zeros(hid, dtype=dtype))
    for word in words:
        emb = ag.constant(embed_word(table, word).astype(dtype))
        h1, c1 = lstm_step(emb, h1, c1, params.lstm1)
        x2 = dropout(h1, params.dropout_rate, mode, rng)
        h2, c2 = lstm_step(x2, h2, c2, params.lstm2)
    final = dropout(h2, params.dropout_rate, mode, rng)
    return dense_apply(final, params.proj)
