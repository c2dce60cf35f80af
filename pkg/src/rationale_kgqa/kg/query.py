"""Subgraph-shaped queries with one answer variable.

A query keeps only the relation/direction skeleton of each path plus the
concrete entity the path ends at.  The answer position and every
intermediate node are variables; intermediates are scoped to their own path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .paths import Path
from .store import KnowledgeGraph

PathPattern = tuple[tuple[int, bool], ...]


@dataclass(frozen=True)
class QueryGraph:
    patterns: tuple[tuple[PathPattern, int], ...]  # (relation skeleton, concrete end entity)

    def __post_init__(self):
        if not self.patterns:
            raise ValueError("a query needs at least one path pattern")
        for skeleton, _ in self.patterns:
            if not skeleton:
                raise ValueError("empty path pattern")

    @classmethod
    def from_paths(cls, kg: KnowledgeGraph, paths: Iterable[Path]) -> "QueryGraph":
        return cls(tuple((p.pattern(kg), p.target) for p in paths))


def _walk_back(kg: KnowledgeGraph, skeleton: PathPattern, end: int) -> set[int]:
    frontier = {end}
    for relation, inverse in reversed(skeleton):
        nxt = set()
        for node in frontier:
            for nb in kg.adjacency[node]:
                # forward hop x -r-> node means node sits at the tail, i.e. nb.inverse
                if nb.relation == relation and nb.inverse != inverse:
                    nxt.add(nb.entity)
        frontier = nxt
        if not frontier:
            break
    return frontier


def execute_query(query: QueryGraph, kg: KnowledgeGraph) -> set[int]:
    """Every entity that can bind the answer variable."""
    result: set[int] | None = None
    for skeleton, end in query.patterns:
        if any(r < 0 or r >= kg.num_relations for r, _ in skeleton):
            return set()
        bindings = _walk_back(kg, skeleton, end)
        result = bindings if result is None else result & bindings
        if not result:
            return set()
    return result or set()
