"""Candidate reasoning-subgraph extraction and deterministic rewriting to text."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .encoder import tokenize
from .kg import KnowledgeGraph, Path, path_extract, shortest_path_extract

WH_WORDS = ("who", "what", "when", "where", "which", "whom", "whose", "why", "how")


@dataclass(frozen=True)
class CandidateSubgraph:
    """Paths from one candidate answer to each topic entity, in topic order."""

    answer: int
    paths: tuple[Path, ...]

    @property
    def triples(self) -> frozenset[int]:
        return frozenset().union(*(p.triple_ids() for p in self.paths))

    def entities(self, kg: KnowledgeGraph) -> frozenset[int]:
        return frozenset(e for p in self.paths for e in p.nodes(kg))

    def relations(self, kg: KnowledgeGraph) -> frozenset[int]:
        return frozenset(kg.triple(t)[1] for t in self.triples)

    def labeled_triples(self, kg: KnowledgeGraph) -> list[tuple[str, str, str]]:
        """Stored-orientation triples with labels, sorted by triple id."""
        out = []
        for tid in sorted(self.triples):
            h, r, t = kg.triple(tid)
            out.append((kg.entity_labels[h], kg.relation_labels[r], kg.entity_labels[t]))
        return out


@dataclass
class Expression:
    text: str
    mention_count: int
    sources: list[int] = field(default_factory=list)  # indices into the subgraph list


def extract_candidates(kg: KnowledgeGraph, candidates: Iterable[int], topics: Sequence[int],
                       max_len: int, fast: bool = False) -> list[CandidateSubgraph]:
    """Every combination of one path per topic entity, for each connected candidate."""
    topics = list(topics)
    out: list[CandidateSubgraph] = []
    if not topics:
        return out
    for cand in candidates:
        path_sets = []
        for topic in topics:
            paths = shortest_path_extract(kg, cand, topic) if fast else path_extract(kg, cand, topic, max_len)
            if fast and paths and len(paths[0]) > max_len:
                paths = []
            if not paths:
                break
            path_sets.append(paths)
        else:
            out.extend(CandidateSubgraph(cand, combo) for combo in itertools.product(*path_sets))
    return out


def wh_pred(question: str) -> str:
    for tok in tokenize(question):
        if tok in WH_WORDS:
            return tok
    return "what"


def rewrite_with_count(subgraph: CandidateSubgraph, question: str, topics: Iterable[int],
                       kg: KnowledgeGraph) -> tuple[str, int]:
    topic_set = set(topics)
    parts = [wh_pred(question)]
    mentions = 0
    for i, path in enumerate(subgraph.paths):
        for _, r, to, inverse in path.hops(kg):
            label = kg.relation_labels[r].lower()
            parts.append(f"is the {label} of" if inverse else f"has the {label}")
            mentions += 1
            if to in topic_set:
                parts.append(kg.entity_labels[to])
                mentions += 1
            else:
                parts.append("an entity that")
        if i + 1 < len(subgraph.paths):
            parts.append("and")
    return " ".join(parts), mentions


def rewrite(subgraph: CandidateSubgraph, question: str, topics: Iterable[int], kg: KnowledgeGraph) -> str:
    """Linearize a subgraph; the answer and intermediate entities are never named."""
    return rewrite_with_count(subgraph, question, topics, kg)[0]


def build_expression_set(subgraphs: Sequence[CandidateSubgraph], question: str, topics: Sequence[int],
                         kg: KnowledgeGraph) -> list[Expression]:
    """Group subgraphs by their rewritten text, in order of first appearance."""
    by_text: dict[str, Expression] = {}
    for idx, sg in enumerate(subgraphs):
        text, count = rewrite_with_count(sg, question, topics, kg)
        expr = by_text.get(text)
        if expr is None:
            expr = by_text[text] = Expression(text, count)
        expr.sources.append(idx)
    return list(by_text.values())


def dump_expressions(expressions: Sequence[Expression]) -> str:
    return "".join(f"{e.text}\t{e.mention_count}\t{','.join(map(str, e.sources))}\n" for e in expressions)
