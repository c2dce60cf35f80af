"""Two-step answering, answer sets, and QA / explanation metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .data import QaExample
from .gnn import GnnModel, rank_entities
from .kg import KnowledgeGraph
from .reasoner import CandidateSubgraph, build_expression_set, dump_expressions, extract_candidates
from .scorer import LabeledQuestion, TextEncoder, predict_pos_neg, select_optimal


@dataclass
class PipelineConfig:
    top_n: int = 10
    max_len: int = 2
    multiplier: float = 1.05
    fast: bool = False

    def validate(self) -> None:
        if self.top_n < 1 or self.max_len < 1:
            raise ValueError("top_n and max_len must be >= 1")
        if self.multiplier < 1.0:
            raise ValueError("multiplier must be >= 1")


@dataclass
class AnswerResult:
    question_id: str
    top1: int
    answers: list[tuple[int, float]]
    expression: str | None = None
    similarity: float | None = None
    subgraphs: list[CandidateSubgraph] = field(default_factory=list)
    fallback: bool = False
    expressions_dump: str = ""

    @property
    def answer_ids(self) -> list[int]:
        return [e for e, _ in self.answers]

    def predicted_triples(self, kg: KnowledgeGraph) -> set[tuple[int, int, int]]:
        """Union of subgraph triples, in stored head-to-tail orientation."""
        return {kg.triple(t) for sg in self.subgraphs for t in sg.triples}

    def to_record(self, kg: KnowledgeGraph) -> dict:
        triples = sorted(self.predicted_triples(kg))
        return {
            "id": self.question_id,
            "top1": kg.entity_ids[self.top1],
            "top1_label": kg.entity_labels[self.top1],
            "answers": [{"id": kg.entity_ids[e], "label": kg.entity_labels[e], "distance": d}
                        for e, d in self.answers],
            "expression": self.expression,
            "similarity": self.similarity,
            "fallback": self.fallback,
            "subgraph": [[kg.entity_labels[h], kg.relation_labels[r], kg.entity_labels[t]] for h, r, t in triples],
        }


def answer_set(candidates: Sequence[tuple[int, float]], multiplier: float) -> list[tuple[int, float]]:
    """Candidates within ``multiplier`` times the smallest distance, in input order."""
    if not candidates:
        raise ValueError("answer_set needs at least one candidate")
    if multiplier < 1.0:
        raise ValueError("multiplier must be >= 1")
    best = min(d for _, d in candidates)
    return [(e, d) for e, d in candidates if d <= multiplier * best]


def _sorted_by_distance(pairs: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    return sorted(pairs, key=lambda p: (p[1], p[0]))


def answer_step1(model: GnnModel, ex: QaExample, kg: KnowledgeGraph, config: PipelineConfig) -> AnswerResult:
    """Answers from graph-embedding distances alone."""
    cands = rank_entities(model, ex, kg, config.top_n)
    found = _sorted_by_distance(answer_set(cands, config.multiplier))
    return AnswerResult(ex.id, found[0][0], found, fallback=True)


def answer(model: GnnModel, encoder: TextEncoder, ex: QaExample, kg: KnowledgeGraph,
           config: PipelineConfig) -> AnswerResult:
    """Retrieve candidates, pick the expression closest to the question, return its answers."""
    config.validate()
    cands = rank_entities(model, ex, kg, config.top_n)
    dist = dict(cands)
    subgraphs = extract_candidates(kg, [e for e, _ in cands], ex.topic_entities, config.max_len, config.fast)
    expressions = build_expression_set(subgraphs, ex.question, ex.topic_entities, kg)
    if not expressions:
        found = _sorted_by_distance(answer_set(cands, config.multiplier))
        return AnswerResult(ex.id, found[0][0], found, fallback=True)
    winner, sim = select_optimal(encoder, ex.question, expressions)
    chosen = [subgraphs[i] for i in winner.sources]
    found = _sorted_by_distance({(sg.answer, dist[sg.answer]) for sg in chosen})
    return AnswerResult(ex.id, found[0][0], found, winner.text, sim, chosen,
                        expressions_dump=dump_expressions(expressions))


def weak_labels(model: GnnModel, examples: Sequence[QaExample], kg: KnowledgeGraph,
                config: PipelineConfig) -> list[LabeledQuestion]:
    """Weak expression labels using each question's graph-step candidates."""
    out = []
    for ex in examples:
        cands = [e for e, _ in rank_entities(model, ex, kg, config.top_n)]
        labels = predict_pos_neg(ex.question, ex.answers, cands, kg, ex.topic_entities, config.max_len)
        out.append(LabeledQuestion(ex.id, ex.question, labels))
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def prf(predicted: set, gold: set) -> tuple[float, float, float]:
    """Precision, recall and F1; an empty prediction scores zero on all three."""
    if not predicted or not gold:
        return 0.0, 0.0, 0.0
    hit = len(predicted & gold)
    p = hit / len(predicted)
    r = hit / len(gold)
    f = 0.0 if hit == 0 else 2 * p * r / (p + r)
    return p, r, f


@dataclass
class Metrics:
    hits_at_1: float
    precision: float
    recall: float
    f1: float
    per_question: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _aggregate(rows: list[dict]) -> Metrics:
    n = len(rows)
    if n == 0:
        return Metrics(0.0, 0.0, 0.0, 0.0, [])
    return Metrics(
        hits_at_1=sum(r["hit"] for r in rows) / n,
        precision=sum(r["precision"] for r in rows) / n,
        recall=sum(r["recall"] for r in rows) / n,
        f1=sum(r["f1"] for r in rows) / n,
        per_question=rows,
    )


def score_qa(examples: Sequence[QaExample], results: Sequence[AnswerResult]) -> Metrics:
    """Hits@1 of the top answer plus macro-averaged answer-set precision, recall and F1."""
    if len(examples) != len(results):
        raise ValueError("one result per example is required")
    rows = []
    for ex, res in zip(examples, results):
        gold = set(ex.answers)
        p, r, f = prf(set(res.answer_ids), gold)
        rows.append({"id": ex.id, "hit": float(res.top1 in gold), "precision": p, "recall": r, "f1": f,
                     "fallback": res.fallback})
    return _aggregate(rows)


def score_explanations(examples: Sequence[QaExample], results: Sequence[AnswerResult],
                       kg: KnowledgeGraph) -> Metrics:
    """Triple-level precision, recall and F1 of returned subgraphs against gold chains."""
    if len(examples) != len(results):
        raise ValueError("one result per example is required")
    rows = []
    for ex, res in zip(examples, results):
        if not ex.gold_chain:
            raise ValueError(f"question {ex.id} has no gold reasoning chain")
        p, r, f = prf(res.predicted_triples(kg), ex.gold_triples())
        rows.append({"id": ex.id, "hit": float(res.top1 in set(ex.answers)), "precision": p, "recall": r,
                     "f1": f})
    return _aggregate(rows)


def run_pipeline(model: GnnModel, encoder: TextEncoder | None, examples: Sequence[QaExample],
                 kg: KnowledgeGraph, config: PipelineConfig) -> list[AnswerResult]:
    """Answer every example; ``encoder=None`` answers from the graph step only."""
    if encoder is None:
        return [answer_step1(model, ex, kg, config) for ex in examples]
    return [answer(model, encoder, ex, kg, config) for ex in examples]


def evaluate_qa(model: GnnModel, encoder: TextEncoder | None, examples: Sequence[QaExample],
                kg: KnowledgeGraph, config: PipelineConfig) -> Metrics:
    return score_qa(examples, run_pipeline(model, encoder, examples, kg, config))


def evaluate_explanations(model: GnnModel, encoder: TextEncoder, examples: Sequence[QaExample],
                          kg: KnowledgeGraph, config: PipelineConfig) -> Metrics:
    return score_explanations(examples, run_pipeline(model, encoder, examples, kg, config), kg)


def metrics_report(qa: Metrics, explanations: Metrics | None = None, extra: dict | None = None) -> str:
    """JSON report with stable field names: ``qa``, ``explanations`` and free-form ``run``."""
    report = {"qa": qa.to_dict(), "explanations": explanations.to_dict() if explanations else None,
              "run": extra or {}}
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
