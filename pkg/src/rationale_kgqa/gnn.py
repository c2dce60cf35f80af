"""Question-conditioned graph encoder, its ranking loss, and candidate retrieval.

Per layer, every entity receives one message per (neighbor, relation) pair,
messages are attended against the layer's question reference, and a
two-way gate decides how much of the aggregate replaces the previous
embedding.  All entities update synchronously from layer ``k-1`` values.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import QaExample, topic_mentions
from .encoder import EncodedQuestion, QuestionEncoder, TokenEmbeddingProvider, tokenize, tokenize_and_mask
from .kg import KGError, KnowledgeGraph
from .numerics import Adam, AdamConfig, GruParams, Module, Tensor, backward, gru_encode_batch, ops
from .numerics.module import uniform_init
from .numerics.tensor import DimensionError

log = logging.getLogger(__name__)


@dataclass
class GnnConfig:
    num_layers: int = 3
    dim: int = 64
    token_dim: int = 32
    margin: float = 1.0
    top_n: int = 10
    num_pairs: int = 32
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.num_layers < 1 or self.dim < 1 or self.token_dim < 1:
            raise ValueError("num_layers, dim and token_dim must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.top_n < 1 or self.batch_size < 1:
            raise ValueError("top_n and batch_size must be >= 1")
        if self.num_pairs < 0:
            raise ValueError("num_pairs must be >= 0 (0 means every pair)")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class GnnLayer(Module):
    def __init__(self, dim: int, rng: np.random.Generator):
        b2 = 1.0 / np.sqrt(2 * dim)
        b1 = 1.0 / np.sqrt(dim)
        self.W_m = uniform_init(rng, (dim, 2 * dim), b2)
        self.b_m = uniform_init(rng, (dim,), b2)
        self.a = uniform_init(rng, (dim,), b1)
        self.W_a = uniform_init(rng, (dim, 2 * dim), b2)
        self.b_a = uniform_init(rng, (dim,), b2)
        self.a_u = uniform_init(rng, (dim,), b1)
        self.W_u = uniform_init(rng, (dim, 2 * dim), b2)
        self.b_u = uniform_init(rng, (dim,), b2)
        self.dim = dim
        # dimension-conversion transforms; identity because every layer keeps ``dim``
        self.W_t1 = np.eye(2 * dim)
        self.W_t2 = np.eye(2 * dim)
        self.W_t3 = np.eye(dim)


class GnnModel(Module):
    def __init__(self, vocabulary: Sequence[str], config: GnnConfig,
                 provider: TokenEmbeddingProvider | None = None):
        """``provider`` replaces the default trainable lookup built from ``vocabulary``."""
        config.validate()
        rng = np.random.default_rng(config.seed)
        self.config = config
        self.tokens = TokenEmbeddingProvider(vocabulary, config.token_dim, rng)
        if provider is not None:
            if provider.dim != config.token_dim:
                raise DimensionError(f"token vectors have dim {provider.dim}, config expects {config.token_dim}")
            self.tokens = provider
        self.question_encoder = QuestionEncoder(config.token_dim, config.dim, rng)
        self.relation_gru = GruParams(config.token_dim, config.dim, rng)
        self.entity_init = uniform_init(rng, (config.dim,), 1.0 / np.sqrt(config.dim))
        self.layers = [GnnLayer(config.dim, rng) for _ in range(config.num_layers)]

    def question_ids(self, question: str, mentions: Sequence[str]) -> list[int]:
        return self.tokens.ids(tokenize_and_mask(question, mentions))

    def encode_question(self, question: str, mentions: Sequence[str]) -> EncodedQuestion:
        return self.question_encoder.encode(self.tokens.table, self.question_ids(question, mentions),
                                            self.config.num_layers)


@dataclass
class LayerState:
    E: Tensor
    R: Tensor


# ---------------------------------------------------------------------------
# single-entity building blocks
# ---------------------------------------------------------------------------

def compute_message(layer: GnnLayer, e_i, r_j) -> Tensor:
    """tanh(W_m [e_i ; r_j] + b_m) for one neighbor/relation pair."""
    return ops.tanh(ops.matmul(layer.W_m, ops.concat([e_i, r_j])) + layer.b_m)


def message_scores(layer: GnnLayer, messages, q_k) -> Tensor:
    messages = ops.as_tensor(messages)
    if messages.ndim != 2 or messages.shape[0] == 0:
        raise DimensionError("at least one message is required")
    d = layer.dim
    pre = ops.matmul(messages, layer.W_a[:, :d].T) + (ops.matmul(layer.W_a[:, d:], q_k) + layer.b_a)
    return ops.matmul(ops.leaky_relu(pre), layer.a)


def attend_aggregate(layer: GnnLayer, messages, q_k) -> Tensor:
    """Attention-weighted average of ``messages`` (shape ``(n, d)``) against ``q_k``."""
    scores = message_scores(layer, messages, q_k)
    weights = ops.softmax(scores)
    return ops.matmul(weights, messages)


def gate_score(layer: GnnLayer, v, q) -> Tensor:
    v = ops.as_tensor(v)
    d = layer.dim
    pre = ops.matmul(v, layer.W_u[:, :d].T) + (ops.matmul(layer.W_u[:, d:], q) + layer.b_u)
    return ops.matmul(ops.leaky_relu(pre), layer.a_u)


def gated_update(layer: GnnLayer, m, e_prev, q) -> Tensor:
    """Convex combination of the aggregate and the previous embedding."""
    s_m = gate_score(layer, m, q)
    s_e = gate_score(layer, e_prev, q)
    w = ops.softmax(ops.stack([s_m, s_e], axis=-1), axis=-1)
    m, e_prev = ops.as_tensor(m), ops.as_tensor(e_prev)
    if m.ndim == 1:
        return m * w[0] + e_prev * w[1]
    return m * w[:, 0:1] + e_prev * w[:, 1:2]


# ---------------------------------------------------------------------------
# whole-graph passes
# ---------------------------------------------------------------------------

def relation_embeddings(model: GnnModel, kg: KnowledgeGraph) -> Tensor:
    ids = [model.tokens.ids(tokenize(lab)) or [1] for lab in kg.relation_labels]
    if not ids:
        return Tensor(np.zeros((0, model.config.dim)))
    return gru_encode_batch(model.tokens.table, ids, model.relation_gru)


def init_embeddings(model: GnnModel, kg: KnowledgeGraph, q: Tensor, topics: Sequence[int]) -> LayerState:
    for e in topics:
        if not 0 <= e < kg.num_entities:
            raise KGError(f"unknown topic entity {e}")
    mask = np.zeros((kg.num_entities, 1))
    mask[list(topics), 0] = 1.0
    E = ops.reshape(q, (1, -1)) * mask + ops.reshape(model.entity_init, (1, -1)) * (1.0 - mask)
    return LayerState(E, relation_embeddings(model, kg))


def propagate(layer: GnnLayer, state: LayerState, q_k: Tensor, q: Tensor, kg: KnowledgeGraph) -> LayerState:
    """One synchronous layer over every entity of ``kg``."""
    E, R = state.E, state.R
    n = kg.num_entities
    if kg.edge_receiver.size == 0:
        return LayerState(E, R)
    d = layer.dim
    ent_part = ops.matmul(E, layer.W_m[:, :d].T)
    rel_part = ops.matmul(R, layer.W_m[:, d:].T)
    msgs = ops.tanh(ops.take(ent_part, kg.edge_sender) + ops.take(rel_part, kg.edge_relation) + layer.b_m)
    scores = message_scores(layer, msgs, q_k)
    alpha = ops.segment_softmax(scores, kg.edge_receiver, n)
    agg = ops.segment_sum(msgs * ops.reshape(alpha, (-1, 1)), kg.edge_receiver, n)
    updated = gated_update(layer, agg, E, q)
    keep = kg.has_neighbors[:, None].astype(np.float64)
    return LayerState(updated * keep + E * (1.0 - keep), R)


def forward(model: GnnModel, encoded: EncodedQuestion, kg: KnowledgeGraph, topics: Sequence[int],
            return_all: bool = False):
    state = init_embeddings(model, kg, encoded.q, topics)
    states = [state]
    for layer, q_k in zip(model.layers, encoded.references):
        state = propagate(layer, state, q_k, encoded.q, kg)
        states.append(state)
    return states if return_all else state


def distances(q: Tensor, E: Tensor) -> np.ndarray:
    return np.sqrt(((E.data - q.data[None, :]) ** 2).sum(axis=1))


def rank_loss(q: Tensor, E: Tensor, pairs: Sequence[tuple[int, int]], margin: float) -> Tensor:
    """Sum over (answer, non-answer) pairs of max(|q-e| - |q-e'| + margin, 0)."""
    if len(pairs) == 0:
        raise ValueError("rank_loss needs at least one (answer, non-answer) pair")
    pos = np.array([p for p, _ in pairs], dtype=np.intp)
    neg = np.array([n for _, n in pairs], dtype=np.intp)
    qr = ops.reshape(q, (1, -1))
    d_pos = ops.norm(ops.take(E, pos) - qr)
    d_neg = ops.norm(ops.take(E, neg) - qr)
    return ops.sum(ops.relu(d_pos - d_neg + margin))


def sample_pairs(answers: Sequence[int], num_entities: int, count: int,
                 rng: np.random.Generator) -> list[tuple[int, int]]:
    answers = sorted(set(answers))
    if not answers:
        raise ValueError("question has no answers")
    mask = np.ones(num_entities, dtype=bool)
    mask[answers] = False
    negatives = np.flatnonzero(mask)
    if negatives.size == 0:
        return []
    if count <= 0:
        return [(a, int(n)) for a in answers for n in negatives]
    a = rng.integers(len(answers), size=count)
    n = rng.integers(negatives.size, size=count)
    return [(answers[i], int(negatives[j])) for i, j in zip(a, n)]


def select_candidates(q, E, n: int) -> list[tuple[int, float]]:
    """The ``n`` entities nearest to ``q``; ties go to the smaller id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q = ops.as_tensor(q)
    E = ops.as_tensor(E)
    dist = distances(q, E)
    order = np.lexsort((np.arange(dist.size), dist))
    return [(int(i), float(dist[i])) for i in order[:n]]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def question_loss(model: GnnModel, ex: QaExample, kg: KnowledgeGraph, pairs) -> Tensor:
    enc = model.encode_question(ex.question, topic_mentions(ex, kg))
    state = forward(model, enc, kg, ex.topic_entities)
    return rank_loss(enc.q, state.E, pairs, model.config.margin)


def rank_entities(model: GnnModel, ex: QaExample, kg: KnowledgeGraph, n: int | None = None):
    enc = model.encode_question(ex.question, topic_mentions(ex, kg))
    state = forward(model, enc, kg, ex.topic_entities)
    return select_candidates(enc.q, state.E, n or model.config.top_n)


def hits_at_1(model: GnnModel, examples: Sequence[QaExample], kg: KnowledgeGraph) -> float:
    if not examples:
        return 0.0
    hits = sum(rank_entities(model, ex, kg, 1)[0][0] in set(ex.answers) for ex in examples)
    return hits / len(examples)


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    valid_hits: list[float] = field(default_factory=list)
    best_epoch: int = -1


def train(model: GnnModel, examples: Sequence[QaExample], kg: KnowledgeGraph,
          validation: Sequence[QaExample] = (), callback: Callable[[int, float, float | None], bool | None] | None = None
          ) -> TrainLog:
    """Fit ``model`` in place; keeps the parameters of the best validation epoch.

    ``callback(epoch, mean_loss, valid_hits)`` runs after every epoch; a true
    return value ends training early.
    """
    cfg = model.config
    for ex in examples:
        ex.validate(kg)
        if not ex.answers:
            raise KGError(f"training question {ex.id} has no answer")
    rng = np.random.default_rng(cfg.seed + 1)
    opt = Adam(model.parameters(), AdamConfig(lr=cfg.lr))
    log_ = TrainLog()
    best = None
    best_hits = -1.0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        opt.zero_grad()
        for step, idx in enumerate(order, 1):
            ex = examples[idx]
            pairs = sample_pairs(ex.answers, kg.num_entities, cfg.num_pairs, rng)
            if not pairs:
                continue
            loss = question_loss(model, ex, kg, pairs)
            total += loss.item()
            backward(loss)
            if step % cfg.batch_size == 0 or step == len(order):
                opt.step()
                opt.zero_grad()
        log_.epoch_loss.append(total / max(len(examples), 1))
        hits = hits_at_1(model, validation, kg) if validation else None
        if hits is not None:
            log_.valid_hits.append(hits)
            if hits > best_hits:
                best_hits, best, log_.best_epoch = hits, copy.deepcopy(model.state_dict()), epoch
        log.info("gnn epoch %d loss %.4f valid hits@1 %s", epoch, log_.epoch_loss[-1], hits)
        if callback is not None and callback(epoch, log_.epoch_loss[-1], hits):
            break
    if best is not None:
        model.load_state_dict(best)
    return log_
