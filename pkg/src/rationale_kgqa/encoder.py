"""Question tokenization, token vectors, and the two question GRU encoders."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numerics import GruParams, Module, Tensor, bigru_encode_batch, ops
from .numerics.tensor import DimensionError

_TOKEN_RE = re.compile(r"[a-z0-9]+")

PAD = "<pad>"
UNK = "<unk>"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tokenize_and_mask(question: str, mentions: Iterable[str] = ()) -> list[str]:
    """Tokenize and drop every token span that spells out a topic mention.

    Falls back to the unmasked tokens if nothing would be left.
    """
    tokens = tokenize(question)
    spans = sorted({tuple(tokenize(m)) for m in mentions if tokenize(m)}, key=len, reverse=True)
    if not spans:
        return tokens
    keep = [True] * len(tokens)
    for span in spans:
        n = len(span)
        i = 0
        while i + n <= len(tokens):
            if all(keep[i:i + n]) and tuple(tokens[i:i + n]) == span:
                for j in range(i, i + n):
                    keep[j] = False
                i += n
            else:
                i += 1
    masked = [t for t, k in zip(tokens, keep) if k]
    return masked or tokens


class TokenEmbeddingProvider(Module):
    """Vocabulary plus a token vector table.

    ``trainable=True`` gives a lookup learned with the model; a provider read
    from a file keeps its vectors fixed.  Index 0 is padding, index 1 the
    shared out-of-vocabulary vector.
    """

    def __init__(self, vocabulary: Sequence[str], dim: int, rng: np.random.Generator | None = None,
                 vectors: np.ndarray | None = None, trainable: bool = True):
        words = [w for w in dict.fromkeys(vocabulary) if w not in (PAD, UNK)]
        self.tokens = [PAD, UNK] + words
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.dim = dim
        if vectors is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            vectors = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(self.tokens), dim))
            vectors[0] = 0.0
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape != (len(self.tokens), dim):
            raise DimensionError(f"expected vectors of shape {(len(self.tokens), dim)}, got {vectors.shape}")
        self.trainable = trainable
        self.table = Tensor(vectors, requires_grad=trainable)

    @property
    def mode(self) -> str:
        return "trainable" if self.trainable else "file"

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, 1) for t in tokens]

    @classmethod
    def from_file(cls, path) -> "TokenEmbeddingProvider":
        """Read ``d_in`` on the first line, then ``token<TAB>v1 v2 ...`` rows."""
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            try:
                dim = int(header)
            except ValueError:
                raise ValueError(f"{path}: first line must be the vector dimension") from None
            tokens, rows = [], []
            for lineno, line in enumerate(fh, 2):
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, vec = line.partition("\t")
                values = np.array(vec.split(), dtype=np.float64)
                if values.shape != (dim,):
                    raise ValueError(f"{path}:{lineno}: expected {dim} values")
                tokens.append(tok)
                rows.append(values)
        table = {t: v for t, v in zip(tokens, rows)}
        vocab = [t for t in tokens if t not in (PAD, UNK)]
        unk = table.get(UNK, np.mean(rows, axis=0) if rows else np.zeros(dim))
        vectors = np.vstack([np.zeros(dim), unk] + [table[t] for t in vocab]) if vocab else np.vstack(
            [np.zeros(dim), unk])
        return cls(vocab, dim, vectors=vectors, trainable=False)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.dim}\n")
            for tok, vec in zip(self.tokens[1:], self.table.data[1:]):
                fh.write(tok + "\t" + " ".join(repr(float(x)) for x in vec) + "\n")


@dataclass
class EncodedQuestion:
    token_ids: list[int]
    q: Tensor
    layer_states: list[tuple[Tensor, tuple[Tensor, Tensor]]] = field(default_factory=list)

    @property
    def references(self) -> list[Tensor]:
        return [qk for qk, _ in self.layer_states]


class QuestionEncoder(Module):
    """General encoder (question embedding) and layerwise encoder (per-layer references)."""

    def __init__(self, input_dim: int, dim: int, rng: np.random.Generator):
        self.general_fwd = GruParams(input_dim, dim, rng)
        self.general_bwd = GruParams(input_dim, dim, rng)
        self.layer_fwd = GruParams(input_dim, dim, rng)
        self.layer_bwd = GruParams(input_dim, dim, rng)
        self.dim = dim

    def encode_general(self, table: Tensor, token_ids: Sequence[int]) -> Tensor:
        if not token_ids:
            raise DimensionError("cannot encode an empty question")
        mean, _ = bigru_encode_batch(table, [token_ids], self.general_fwd, self.general_bwd)
        return mean[0]

    def encode_layerwise(self, table: Tensor, token_ids: Sequence[int],
                         previous: tuple[Tensor, Tensor] | None = None) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """One layer's reference vector; ``previous`` is the carried final-state pair."""
        if not token_ids:
            raise DimensionError("cannot encode an empty question")
        if previous is None:
            h0f = h0b = None
        else:
            h0f, h0b = (ops.reshape(p, (1, -1)) for p in previous)
            if h0f.shape[-1] != self.dim or h0b.shape[-1] != self.dim:
                raise DimensionError("carried hidden state has the wrong dimension")
        mean, (hf, hb) = bigru_encode_batch(table, [token_ids], self.layer_fwd, self.layer_bwd, h0f, h0b)
        return mean[0], (hf, hb)

    def encode(self, table: Tensor, token_ids: Sequence[int], num_layers: int) -> EncodedQuestion:
        q = self.encode_general(table, token_ids)
        enc = EncodedQuestion(list(token_ids), q)
        prev = None
        for _ in range(num_layers):
            qk, prev = self.encode_layerwise(table, token_ids, prev)
            enc.layer_states.append((qk, prev))
        return enc
