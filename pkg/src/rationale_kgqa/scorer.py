"""Text encoder for questions and expressions, expression selection, weak labels, fine-tuning."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .encoder import TokenEmbeddingProvider, tokenize
from .kg import KnowledgeGraph, QueryGraph, execute_query
from .numerics import Adam, AdamConfig, GruParams, Module, Tensor, backward, bigru_encode_batch, ops
from .numerics.module import parameter
from .numerics.tensor import DimensionError
from .reasoner import CandidateSubgraph, Expression, build_expression_set, extract_candidates

log = logging.getLogger(__name__)


class TextEncoder(Module):
    """Bidirectional GRU over token vectors; the text vector is the mean of the two final states.

    The vocabulary comes from a token provider, but the token vectors are
    copied into a parameter of this encoder so that fine-tuning never
    touches the graph model's lookup.
    """

    def __init__(self, provider: TokenEmbeddingProvider, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        rng = np.random.default_rng(seed)
        self.vocabulary = list(provider.tokens)
        self.index = dict(provider.index)
        self.token_dim = provider.dim
        self.dim = dim
        self.seed = seed
        self.table = parameter(provider.table.data)
        self.fwd = GruParams(provider.dim, dim, rng)
        self.bwd = GruParams(provider.dim, dim, rng)

    def ids(self, text: str) -> list[int]:
        tokens = tokenize(text)
        if not tokens:
            raise DimensionError(f"cannot encode text without tokens: {text!r}")
        return [self.index.get(t, 1) for t in tokens]

    def encode_many(self, texts: Sequence[str]) -> Tensor:
        """Encode ``texts`` into a ``(len(texts), dim)`` tensor."""
        if not texts:
            raise DimensionError("no texts to encode")
        mean, _ = bigru_encode_batch(self.table, [self.ids(t) for t in texts], self.fwd, self.bwd)
        return mean

    def encode_text(self, text: str) -> Tensor:
        return self.encode_many([text])[0]

    def similarities(self, question: str, texts: Sequence[str]) -> Tensor:
        enc = self.encode_many([question, *texts])
        return ops.cosine(enc[1:], enc[0])


def select_optimal(encoder: TextEncoder, question: str, expressions: Sequence[Expression]
                   ) -> tuple[Expression, float]:
    """Expression most similar to the question; ties prefer fewer mentions, then text order."""
    if not expressions:
        raise ValueError("no expressions to choose from")
    sims = encoder.similarities(question, [e.text for e in expressions]).data
    best = min(range(len(expressions)),
               key=lambda i: (-sims[i], expressions[i].mention_count, expressions[i].text))
    return expressions[best], float(sims[best])


@dataclass
class WeakLabelSet:
    positives: list[Expression] = field(default_factory=list)
    negatives: list[Expression] = field(default_factory=list)
    votes: dict[str, int] = field(default_factory=dict)
    matched: dict[str, frozenset[int]] = field(default_factory=dict)

    @property
    def usable(self) -> bool:
        return bool(self.positives) and bool(self.negatives)

    def all_expressions(self) -> list[Expression]:
        return self.positives + self.negatives


def subgraph_matches(kg: KnowledgeGraph, subgraph: CandidateSubgraph) -> frozenset[int]:
    """Entities that can stand in the answer slot of the subgraph's pattern."""
    return frozenset(execute_query(QueryGraph.from_paths(kg, subgraph.paths), kg))


def vote_expressions(expressions: Sequence[Expression], subgraphs: Sequence[CandidateSubgraph],
                     answers: Iterable[int], kg: KnowledgeGraph) -> WeakLabelSet:
    """Score each expression by answers matched minus non-answers matched and split the set."""
    gold = set(answers)
    labels = WeakLabelSet()
    cache: dict[QueryGraph, frozenset[int]] = {}
    for expr in expressions:
        matched: set[int] = set()
        for idx in expr.sources:
            query = QueryGraph.from_paths(kg, subgraphs[idx].paths)
            if query not in cache:
                cache[query] = frozenset(execute_query(query, kg))
            matched |= cache[query]
        labels.matched[expr.text] = frozenset(matched)
        labels.votes[expr.text] = len(matched & gold) - len(matched - gold)
    if not expressions:
        return labels
    max_vote = max(labels.votes.values())
    min_len = min(e.mention_count for e in expressions if labels.votes[e.text] == max_vote)
    for expr in expressions:
        if labels.votes[expr.text] == max_vote and expr.mention_count == min_len:
            labels.positives.append(expr)
        else:
            labels.negatives.append(expr)
    return labels


def predict_pos_neg(question: str, answers: Sequence[int], candidates: Sequence[int], kg: KnowledgeGraph,
                    topics: Sequence[int], max_len: int) -> WeakLabelSet:
    """Weak positive/negative expressions from the gold answers and Step-I candidates."""
    if not answers:
        raise ValueError("weak labels need at least one gold answer")
    entities = list(dict.fromkeys([*candidates, *sorted(set(answers))]))
    subgraphs = extract_candidates(kg, entities, topics, max_len)
    expressions = build_expression_set(subgraphs, question, topics, kg)
    return vote_expressions(expressions, subgraphs, answers, kg)


def triplet_finetune_loss(encoder: TextEncoder, question: str, positives: Sequence[str],
                          negatives: Sequence[str], margin: float) -> Tensor:
    """Sum over (positive, negative) pairs of max(sim_n - sim_p + margin, 0)."""
    if not positives or not negatives:
        return Tensor(np.zeros(()))
    sims = encoder.similarities(question, [*positives, *negatives])
    sp = ops.reshape(sims[:len(positives)], (-1, 1))
    sn = ops.reshape(sims[len(positives):], (1, -1))
    return ops.sum(ops.relu(sn - sp + margin))


# ---------------------------------------------------------------------------
# fine-tuning
# ---------------------------------------------------------------------------

@dataclass
class FinetuneConfig:
    margin: float = 0.1
    epochs: int = 10
    lr: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


@dataclass
class LabeledQuestion:
    id: str
    question: str
    labels: WeakLabelSet


@dataclass
class FinetuneLog:
    epoch_loss: list[float] = field(default_factory=list)
    valid_accuracy: list[float] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    best_epoch: int = -1


def selection_accuracy(encoder: TextEncoder, items: Sequence[LabeledQuestion]) -> float:
    """Fraction of questions whose selected expression is a weak positive."""
    usable = [it for it in items if it.labels.positives]
    if not usable:
        return 0.0
    hits = 0
    for it in usable:
        chosen, _ = select_optimal(encoder, it.question, it.labels.all_expressions())
        hits += chosen.text in {e.text for e in it.labels.positives}
    return hits / len(usable)


def finetune(encoder: TextEncoder, train_items: Sequence[LabeledQuestion], config: FinetuneConfig,
             validation: Sequence[LabeledQuestion] = (),
             callback: Callable[[int, float, float | None], bool | None] | None = None) -> FinetuneLog:
    """Triplet-loss fine-tuning in place; keeps the best validation epoch when a validation set is given."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    opt = Adam(encoder.parameters(), AdamConfig(lr=config.lr))
    out = FinetuneLog()
    usable = []
    for it in train_items:
        if it.labels.usable:
            usable.append(it)
        else:
            out.skipped.append(it.id)
            log.info("skipping question %s: empty positive or negative set", it.id)
    best, best_acc = None, -1.0
    for epoch in range(config.epochs):
        total = 0.0
        for idx in rng.permutation(len(usable)):
            it = usable[idx]
            loss = triplet_finetune_loss(encoder, it.question, [e.text for e in it.labels.positives],
                                         [e.text for e in it.labels.negatives], config.margin)
            total += loss.item()
            if loss.requires_grad:
                opt.zero_grad()
                backward(loss)
                opt.step()
        out.epoch_loss.append(total / max(len(usable), 1))
        acc = selection_accuracy(encoder, validation) if validation else None
        if acc is not None:
            out.valid_accuracy.append(acc)
            if acc > best_acc:
                best_acc, best, out.best_epoch = acc, copy.deepcopy(encoder.state_dict()), epoch
        log.info("finetune epoch %d loss %.4f valid selection accuracy %s", epoch, out.epoch_loss[-1], acc)
        if callback is not None and callback(epoch, out.epoch_loss[-1], acc):
            break
    if best is not None:
        encoder.load_state_dict(best)
    return out


# ---------------------------------------------------------------------------
# weak-label cache
# ---------------------------------------------------------------------------

def save_label_cache(path, items: Iterable[LabeledQuestion]) -> None:
    """One JSON object per line: id, question, positives, negatives, votes, mention_counts."""
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            lab = it.labels
            rec = {
                "id": it.id,
                "question": it.question,
                "positives": [e.text for e in lab.positives],
                "negatives": [e.text for e in lab.negatives],
                "votes": lab.votes,
                "mention_counts": {e.text: e.mention_count for e in lab.all_expressions()},
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_label_cache(path) -> list[LabeledQuestion]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                counts = rec["mention_counts"]
                labels = WeakLabelSet(
                    positives=[Expression(t, counts[t]) for t in rec["positives"]],
                    negatives=[Expression(t, counts[t]) for t in rec["negatives"]],
                    votes={k: int(v) for k, v in rec["votes"].items()},
                )
                items.append(LabeledQuestion(str(rec["id"]), rec["question"], labels))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed label record ({exc})") from None
    return items
