from .paths import Path, path_extract, shortest_distance, shortest_path_extract, undirected_distances
from .query import QueryGraph, execute_query
from .store import KGError, KnowledgeGraph, Neighbor, from_labeled_triples, load_kg, save_kg

__all__ = [
    "KGError", "KnowledgeGraph", "Neighbor", "Path", "QueryGraph", "execute_query",
    "from_labeled_triples", "load_kg", "path_extract", "save_kg", "shortest_distance",
    "shortest_path_extract", "undirected_distances",
]
