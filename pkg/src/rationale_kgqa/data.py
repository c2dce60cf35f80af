"""QA records and their JSON-lines file format.

Each line of a dataset file is one object::

    {"id": "q1", "question": "...", "topic_entities": ["m.01"], "answers": ["m.02"],
     "gold_chain": [["m.01", "r.5", "m.07", false], ...]}

Entity and relation references use the identifiers of the graph's label
files.  ``gold_chain`` is optional; each entry is ``[head, relation, tail,
inverse_flag]`` where the flag records traversal direction only (the triple
itself is always stored head-to-tail).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .kg import KGError, KnowledgeGraph


@dataclass
class QaExample:
    id: str
    question: str
    topic_entities: list[int]
    answers: list[int]
    gold_chain: list[tuple[int, int, int, bool]] | None = None
    meta: dict = field(default_factory=dict)

    def validate(self, kg: KnowledgeGraph) -> None:
        for e in list(self.topic_entities) + list(self.answers):
            kg.check_entity(e)
        if not self.topic_entities:
            raise KGError(f"question {self.id} has no topic entity")
        for h, r, t, _ in self.gold_chain or ():
            if not kg.has_triple(h, r, t):
                raise KGError(f"question {self.id}: gold triple {(h, r, t)} not in graph")

    def gold_triples(self) -> set[tuple[int, int, int]]:
        return {(h, r, t) for h, r, t, _ in self.gold_chain or ()}


def example_to_record(ex: QaExample, kg: KnowledgeGraph) -> dict:
    rec = {
        "id": ex.id,
        "question": ex.question,
        "topic_entities": [kg.entity_ids[e] for e in ex.topic_entities],
        "answers": [kg.entity_ids[e] for e in ex.answers],
    }
    if ex.gold_chain is not None:
        rec["gold_chain"] = [[kg.entity_ids[h], kg.relation_ids[r], kg.entity_ids[t], bool(inv)]
                             for h, r, t, inv in ex.gold_chain]
    return rec


def record_to_example(rec: dict, kg: KnowledgeGraph) -> QaExample:
    try:
        chain = rec.get("gold_chain")
        ex = QaExample(
            id=str(rec["id"]),
            question=rec["question"],
            topic_entities=[kg.entity(e) for e in rec["topic_entities"]],
            answers=[kg.entity(e) for e in rec["answers"]],
            gold_chain=None if chain is None else [
                (kg.entity(h), kg.relation(r), kg.entity(t), bool(inv)) for h, r, t, inv in chain],
        )
    except KeyError as exc:
        raise KGError(f"dataset record missing field {exc}") from None
    ex.validate(kg)
    return ex


def load_dataset(path, kg: KnowledgeGraph) -> list[QaExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KGError(f"{path}:{lineno}: {exc}") from None
            out.append(record_to_example(rec, kg))
    return out


def save_dataset(path, examples: Iterable[QaExample], kg: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_record(ex, kg), sort_keys=True) + "\n")


def topic_mentions(ex: QaExample, kg: KnowledgeGraph) -> list[str]:
    return [kg.entity_labels[e] for e in ex.topic_entities]
