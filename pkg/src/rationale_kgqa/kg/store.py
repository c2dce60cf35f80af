"""Immutable triple store with per-entity adjacency."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class KGError(ValueError):
    """Malformed or inconsistent knowledge-graph input."""


@dataclass(frozen=True)
class Neighbor:
    entity: int
    relation: int
    triple: int
    inverse: bool  # True when the edge is traversed tail -> head


@dataclass(eq=False)
class KnowledgeGraph:
    """Entities and relations are dense integer ids ``0..n-1`` with string labels.

    ``external_ids`` keep the identifiers used in the input files so that
    datasets can refer to entities the same way.
    """

    entity_labels: list[str]
    relation_labels: list[str]
    triples: np.ndarray  # (n_triples, 3) int64 rows of (head, relation, tail)
    entity_ids: list[str] = field(default_factory=list)
    relation_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if not self.entity_ids:
            self.entity_ids = [str(i) for i in range(len(self.entity_labels))]
        if not self.relation_ids:
            self.relation_ids = [str(i) for i in range(len(self.relation_labels))]
        for kind, labels in (("entity", self.entity_labels), ("relation", self.relation_labels)):
            for i, lab in enumerate(labels):
                if not isinstance(lab, str) or not lab.strip():
                    raise KGError(f"{kind} {i} has an empty label")
        n_e, n_r = len(self.entity_labels), len(self.relation_labels)
        if self.triples.size:
            h, r, t = self.triples.T
            if h.min() < 0 or t.min() < 0 or max(h.max(), t.max()) >= n_e:
                raise KGError("triple references an unknown entity")
            if r.min() < 0 or r.max() >= n_r:
                raise KGError("triple references an unknown relation")
        self._entity_index = {eid: i for i, eid in enumerate(self.entity_ids)}
        self._relation_index = {rid: i for i, rid in enumerate(self.relation_ids)}
        if len(self._entity_index) != n_e or len(self._relation_index) != n_r:
            raise KGError("duplicate identifiers")
        self._build_indices()

    def _build_indices(self) -> None:
        n = self.num_entities
        adj: list[list[Neighbor]] = [[] for _ in range(n)]
        for tid, (h, r, t) in enumerate(self.triples.tolist()):
            adj[h].append(Neighbor(t, r, tid, False))
            adj[t].append(Neighbor(h, r, tid, True))
        for lst in adj:
            lst.sort(key=lambda nb: (nb.triple, nb.inverse))
        self.adjacency: tuple[tuple[Neighbor, ...], ...] = tuple(tuple(a) for a in adj)
        self._triple_set = {tuple(row) for row in self.triples.tolist()}

        # message edges: one per (receiver, sender, relation) regardless of direction
        edges = set()
        for h, r, t in self.triples.tolist():
            edges.add((h, t, r))
            edges.add((t, h, r))
        arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 3)
        self.edge_receiver = arr[:, 0].copy()
        self.edge_sender = arr[:, 1].copy()
        self.edge_relation = arr[:, 2].copy()
        has = np.zeros(n, dtype=bool)
        has[self.edge_receiver] = True
        self.has_neighbors = has

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def num_triples(self) -> int:
        return int(self.triples.shape[0])

    def entity(self, external_id: str) -> int:
        try:
            return self._entity_index[external_id]
        except KeyError:
            raise KGError(f"unknown entity id {external_id!r}") from None

    def relation(self, external_id: str) -> int:
        try:
            return self._relation_index[external_id]
        except KeyError:
            raise KGError(f"unknown relation id {external_id!r}") from None

    def check_entity(self, e: int) -> None:
        if not 0 <= e < self.num_entities:
            raise KGError(f"unknown entity {e}")

    def has_triple(self, h: int, r: int, t: int) -> bool:
        return (h, r, t) in self._triple_set

    def triple(self, tid: int) -> tuple[int, int, int]:
        h, r, t = self.triples[tid]
        return int(h), int(r), int(t)

    def relations_between(self, e: int, other: int) -> set[tuple[int, bool]]:
        """Relations linking ``e`` and ``other`` as ``(relation, forward)`` pairs.

        ``forward`` is True for ``(e, r, other)`` and False for ``(other, r, e)``.
        """
        self.check_entity(e)
        self.check_entity(other)
        return {(nb.relation, not nb.inverse) for nb in self.adjacency[e] if nb.entity == other}

    def summary(self) -> str:
        return f"{self.num_entities} entities, {self.num_relations} relations, {self.num_triples} triples"


def from_labeled_triples(triples: Iterable[Sequence[str]]) -> KnowledgeGraph:
    """Build a graph whose ids are its labels; handy for small hand-written fixtures."""
    ents: dict[str, int] = {}
    rels: dict[str, int] = {}
    rows = []
    for h, r, t in triples:
        for name in (h, t):
            ents.setdefault(name, len(ents))
        rels.setdefault(r, len(rels))
        rows.append((ents[h], rels[r], ents[t]))
    rows = _dedupe(rows)
    return KnowledgeGraph(list(ents), list(rels), np.array(rows, dtype=np.int64).reshape(-1, 3),
                          entity_ids=list(ents), relation_ids=list(rels))


def _dedupe(rows: list[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    seen = set()
    out = []
    for row in rows:
        if row in seen:
            continue
        seen.add(row)
        out.append(row)
    if len(out) != len(rows):
        log.info("dropped %d duplicate triples", len(rows) - len(out))
    return out


def _read_labels(path: FsPath, kind: str) -> tuple[list[str], list[str]]:
    ids: list[str] = []
    labels: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise KGError(f"{path}:{lineno}: expected 'id<TAB>label'")
            if parts[0] in seen:
                raise KGError(f"{path}:{lineno}: duplicate {kind} id {parts[0]!r}")
            seen.add(parts[0])
            ids.append(parts[0])
            labels.append(parts[1])
    return ids, labels


def load_kg(triples_path, entity_labels_path, relation_labels_path) -> KnowledgeGraph:
    """Load a graph from a TSV triple file plus two ``id<TAB>label`` files."""
    ent_ids, ent_labels = _read_labels(FsPath(entity_labels_path), "entity")
    rel_ids, rel_labels = _read_labels(FsPath(relation_labels_path), "relation")
    e_index = {e: i for i, e in enumerate(ent_ids)}
    r_index = {r: i for i, r in enumerate(rel_ids)}
    rows = []
    with open(triples_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KGError(f"{triples_path}:{lineno}: expected 'head<TAB>relation<TAB>tail'")
            h, r, t = parts
            if h not in e_index or t not in e_index:
                raise KGError(f"{triples_path}:{lineno}: unknown entity id")
            if r not in r_index:
                raise KGError(f"{triples_path}:{lineno}: unknown relation id {r!r}")
            rows.append((e_index[h], r_index[r], e_index[t]))
    rows = _dedupe(rows)
    kg = KnowledgeGraph(ent_labels, rel_labels, np.array(rows, dtype=np.int64).reshape(-1, 3),
                        entity_ids=ent_ids, relation_ids=rel_ids)
    log.info("loaded graph: %s", kg.summary())
    return kg


def save_kg(kg: KnowledgeGraph, triples_path, entity_labels_path, relation_labels_path) -> None:
    with open(entity_labels_path, "w", encoding="utf-8") as fh:
        for eid, lab in zip(kg.entity_ids, kg.entity_labels):
            fh.write(f"{eid}\t{lab}\n")
    with open(relation_labels_path, "w", encoding="utf-8") as fh:
        for rid, lab in zip(kg.relation_ids, kg.relation_labels):
            fh.write(f"{rid}\t{lab}\n")
    with open(triples_path, "w", encoding="utf-8") as fh:
        for h, r, t in kg.triples.tolist():
            fh.write(f"{kg.entity_ids[h]}\t{kg.relation_ids[r]}\t{kg.entity_ids[t]}\n")
