"""Random graphs with templated multi-hop questions and planted reasoning chains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import QaExample
from .kg import KnowledgeGraph, Path, QueryGraph, execute_query, undirected_distances

DEFAULT_RELATIONS = (
    "director", "cast member", "birthplace", "capital", "located in", "spouse",
    "employer", "genre", "author", "parent", "language", "currency",
)

_TEMPLATES = (
    "what is the {chain} {topic}",
    "which entity is the {chain} {topic}",
    "tell me the {chain} {topic}",
    "who is the {chain} {topic}",
)

_ONSETS = "b c d f g h k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


@dataclass
class SyntheticConfig:
    num_entities: int = 500
    hops: int = 2
    train: int = 200
    valid: int = 25
    test: int = 50
    triples_per_entity: float = 2.0
    relations: tuple[str, ...] = DEFAULT_RELATIONS
    seed: int = 7

    def validate(self) -> None:
        if self.num_entities < self.hops + 1:
            raise ValueError("not enough entities for the requested hop count")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")
        if not self.relations:
            raise ValueError("relation vocabulary is empty")
        if self.triples_per_entity <= 0 or self.triples_per_entity > len(self.relations):
            raise ValueError("triples_per_entity must be in (0, number of relations]")
        if min(self.train, self.valid, self.test) < 0:
            raise ValueError("split sizes must be non-negative")


def _entity_names(n: int, rng: np.random.Generator) -> list[str]:
    names: list[str] = []
    seen: set[str] = set()
    syllables = 3
    while len(names) < n:
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if word in seen:
            if len(seen) > 0.5 * len(_ONSETS) ** syllables * len(_VOWELS) ** syllables:
                syllables += 1
            continue
        seen.add(word)
        names.append(word.capitalize())
    return names


def _build_graph(cfg: SyntheticConfig, rng: np.random.Generator) -> KnowledgeGraph:
    n = cfg.num_entities
    n_rel = len(cfg.relations)
    rows = []
    base = int(np.floor(cfg.triples_per_entity))
    extra = cfg.triples_per_entity - base
    for h in range(n):
        k = base + int(rng.random() < extra)
        for r in sorted(rng.choice(n_rel, size=k, replace=False).tolist()):
            t = int(rng.integers(n - 1))
            t += t >= h
            rows.append((h, r, t))
    return KnowledgeGraph(_entity_names(n, rng), list(cfg.relations), np.array(rows, dtype=np.int64),
                          entity_ids=[f"e{i}" for i in range(n)],
                          relation_ids=[f"r{i}" for i in range(n_rel)])


def _chain_text(kg: KnowledgeGraph, relations: list[int]) -> str:
    return " ".join(f"{kg.relation_labels[r]} of the" for r in reversed(relations[1:])) + \
        f" {kg.relation_labels[relations[0]]} of"


def _walk(kg: KnowledgeGraph, topic: int, hops: int, rng: np.random.Generator):
    """Forward random walk of ``hops`` triples with distinct nodes, or None."""
    nodes = [topic]
    steps = []
    for _ in range(hops):
        out = [nb for nb in kg.adjacency[nodes[-1]] if not nb.inverse and nb.entity not in nodes]
        if not out:
            return None
        nb = out[int(rng.integers(len(out)))]
        steps.append(nb)
        nodes.append(nb.entity)
    return nodes, steps


def generate_synthetic(cfg: SyntheticConfig) -> tuple[KnowledgeGraph, dict[str, list[QaExample]]]:
    """Deterministic per ``cfg.seed``; gold answers come from executing the planted pattern.

    The planted walk always ends exactly ``cfg.hops`` undirected steps from
    the topic entity, so no shorter chain links the two.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    kg = _build_graph(cfg, rng)
    wanted = {"train": cfg.train, "valid": cfg.valid, "test": cfg.test}
    total = sum(wanted.values())
    examples: list[QaExample] = []
    used: set[tuple] = set()
    attempts = 0
    while len(examples) < total:
        attempts += 1
        if attempts > 200 * max(total, 1):
            raise ValueError("could not plant enough distinct questions; graph too sparse for hop count")
        topic = int(rng.integers(kg.num_entities))
        walked = _walk(kg, topic, cfg.hops, rng)
        if walked is None:
            continue
        nodes, steps = walked
        # a walk whose end is also reachable by a shorter route would not be a k-hop question
        if undirected_distances(kg, topic, cfg.hops).get(nodes[-1]) != cfg.hops:
            continue
        rels = [nb.relation for nb in steps]
        key = (topic, tuple(rels))
        if key in used:
            continue
        # chain from the answer back to the topic, traversing each triple against its direction
        path = Path(tuple((nb.triple, True) for nb in reversed(steps)), nodes[-1], topic)
        answers = sorted(execute_query(QueryGraph.from_paths(kg, [path]), kg))
        if topic in answers:
            continue
        used.add(key)
        template = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        text = template.format(chain=_chain_text(kg, rels), topic=kg.entity_labels[topic])
        chain = []
        for tid, inv in path.steps:
            h, r, t = kg.triple(tid)
            chain.append((h, r, t, inv))
        examples.append(QaExample(id=f"q{len(examples)}", question=text, topic_entities=[topic],
                                  answers=answers, gold_chain=chain))
    splits = {}
    start = 0
    for name, count in wanted.items():
        splits[name] = examples[start:start + count]
        for i, ex in enumerate(splits[name]):
            ex.id = f"{name}-{i}"
        start += count
    return kg, splits
