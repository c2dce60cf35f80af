"""Hand-built fixtures with metrics worked out by hand (as exact fractions)."""

from fractions import Fraction as F

import numpy as np

from rationale_kgqa.data import QaExample
from rationale_kgqa.kg import KnowledgeGraph, Path
from rationale_kgqa.pipeline import AnswerResult
from rationale_kgqa.reasoner import CandidateSubgraph

# (gold answers, predicted answers in rank order) -> hit, P, R, F1
QA_ROWS = [
    ({1}, [1], 1, F(1), F(1), F(1)),
    ({1}, [2], 0, F(0), F(0), F(0)),
    ({1, 2}, [1], 1, F(1), F(1, 2), F(2, 3)),
    ({1, 2}, [3, 1], 0, F(1, 2), F(1, 2), F(1, 2)),
    ({1}, [], 0, F(0), F(0), F(0)),  # empty prediction
    ({1, 2, 3}, [1, 2, 3, 4], 1, F(3, 4), F(1), F(6, 7)),
    ({4}, [4, 5], 1, F(1, 2), F(1), F(2, 3)),
    ({5}, [5], 1, F(1), F(1), F(1)),
    ({5, 6}, [6, 5], 1, F(1), F(1), F(1)),
    ({7}, [8, 9], 0, F(0), F(0), F(0)),
]

# (gold triple ids, predicted triple ids) -> P, R, F1
EXPL_ROWS = [
    ({0, 1}, {0, 1}, F(1), F(1), F(1)),
    ({0, 1}, set(), F(0), F(0), F(0)),  # empty prediction
    ({2}, {2, 3}, F(1, 2), F(1), F(2, 3)),
    ({3, 4}, {4}, F(1), F(1, 2), F(2, 3)),
    ({5}, {6}, F(0), F(0), F(0)),
    ({5, 6}, {5, 6, 7}, F(2, 3), F(1), F(4, 5)),
    ({7, 8}, {7, 8}, F(1), F(1), F(1)),
    ({0}, {0}, F(1), F(1), F(1)),
    ({1, 2, 3}, {1}, F(1), F(1, 3), F(1, 2)),
    ({8}, {0, 8}, F(1, 2), F(1), F(2, 3)),
]


def chain_kg() -> KnowledgeGraph:
    """Entities 0..9 on a line, triple i = (i, r, i+1)."""
    rows = np.array([[i, 0, i + 1] for i in range(9)])
    return KnowledgeGraph([f"n{i}" for i in range(10)], ["next"], rows)


def qa_fixture():
    examples, results = [], []
    for i, (gold, pred, *_rest) in enumerate(QA_ROWS):
        examples.append(QaExample(f"q{i}", "what", [0], sorted(gold)))
        results.append(AnswerResult(f"q{i}", pred[0] if pred else -1, [(e, float(k)) for k, e in enumerate(pred)]))
    return examples, results


def explanation_fixture(kg: KnowledgeGraph):
    examples, results = [], []
    for i, (gold, pred, *_rest) in enumerate(EXPL_ROWS):
        # odd rows mark the gold chain as traversed tail-to-head; scoring must ignore it
        chain = [(t, 0, t + 1, bool(i % 2)) for t in sorted(gold)]
        examples.append(QaExample(f"q{i}", "what", [0], [1], chain))
        subgraphs = [CandidateSubgraph(t + 1, (Path(((t, True),), t + 1, t),)) for t in sorted(pred)]
        results.append(AnswerResult(f"q{i}", 1, [(1, 0.0)], subgraphs=subgraphs))
    return examples, results


def expected_means(rows, columns):
    n = len(rows)
    return [sum(F(r[c]) for r in rows) / n for c in columns]
