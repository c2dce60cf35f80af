"""Bounded simple-path enumeration over an undirected view of the graph."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .store import KnowledgeGraph

Step = tuple[int, bool]  # (triple id, traversed tail -> head)


@dataclass(frozen=True, order=True)
class Path:
    """A walk from ``source`` to ``target`` given as oriented triples.

    Ordering compares ``steps`` first, which is the lexicographic triple-id
    order used for every returned path set.
    """

    steps: tuple[Step, ...]
    source: int
    target: int

    def __len__(self) -> int:
        return len(self.steps)

    def hops(self, kg: KnowledgeGraph) -> list[tuple[int, int, int, bool]]:
        """``(from_entity, relation, to_entity, inverse)`` in traversal order."""
        out = []
        cur = self.source
        for tid, inverse in self.steps:
            h, r, t = kg.triple(tid)
            nxt = h if inverse else t
            out.append((cur, r, nxt, inverse))
            cur = nxt
        return out

    def nodes(self, kg: KnowledgeGraph) -> list[int]:
        return [self.source] + [hop[2] for hop in self.hops(kg)]

    def pattern(self, kg: KnowledgeGraph) -> tuple[tuple[int, bool], ...]:
        """Relation/direction sequence with the concrete entities dropped."""
        return tuple((r, inv) for _, r, _, inv in self.hops(kg))

    def reversed(self) -> "Path":
        return Path(tuple((tid, not inv) for tid, inv in reversed(self.steps)), self.target, self.source)

    def triple_ids(self) -> frozenset[int]:
        return frozenset(tid for tid, _ in self.steps)


def undirected_distances(kg: KnowledgeGraph, source: int, limit: int | None = None) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if limit is not None and dist[u] >= limit:
            continue
        for nb in kg.adjacency[u]:
            if nb.entity not in dist:
                dist[nb.entity] = dist[u] + 1
                queue.append(nb.entity)
    return dist


def path_extract(kg: KnowledgeGraph, source: int, target: int, max_len: int) -> list[Path]:
    """All simple paths with at most ``max_len`` triples from ``source`` to ``target``."""
    kg.check_entity(source)
    kg.check_entity(target)
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if source == target:
        return []
    to_target = undirected_distances(kg, target, max_len)
    if source not in to_target:
        return []
    found: list[Path] = []
    visited = {source}
    steps: list[Step] = []

    def dfs(u: int) -> None:
        depth = len(steps)
        for nb in kg.adjacency[u]:
            v = nb.entity
            if v in visited:
                continue
            remaining = to_target.get(v)
            if remaining is None or depth + 1 + remaining > max_len:
                continue
            steps.append((nb.triple, nb.inverse))
            if v == target:
                found.append(Path(tuple(steps), source, target))
            else:
                visited.add(v)
                dfs(v)
                visited.discard(v)
            steps.pop()

    dfs(source)
    found.sort()
    return found


def shortest_distance(kg: KnowledgeGraph, source: int, target: int) -> int | None:
    kg.check_entity(source)
    kg.check_entity(target)
    return undirected_distances(kg, source).get(target)


def shortest_path_extract(kg: KnowledgeGraph, source: int, target: int) -> list[Path]:
    """All simple paths of minimal length between ``source`` and ``target``."""
    d = shortest_distance(kg, source, target)
    if not d:
        return []
    return path_extract(kg, source, target, d)
