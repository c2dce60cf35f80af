"""Estimator-style wrappers (``fit`` / ``predict`` / ``score``) around the two reasoning steps."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import QaExample
from .encoder import TokenEmbeddingProvider, tokenize
from .gnn import GnnConfig, GnnModel, TrainLog, rank_entities, train
from .kg import KGError, KnowledgeGraph
from .pipeline import AnswerResult, PipelineConfig, run_pipeline, score_explanations, score_qa, weak_labels
from .scorer import FinetuneConfig, FinetuneLog, LabeledQuestion, TextEncoder, finetune


def check_kg(kg) -> KnowledgeGraph:
    if not isinstance(kg, KnowledgeGraph):
        raise TypeError(f"expected a KnowledgeGraph, got {type(kg).__name__}")
    return kg


def check_examples(X, kg: KnowledgeGraph, require_answers: bool = False) -> list[QaExample]:
    """Validate a sequence of questions against ``kg``; the counterpart of ``check_array``."""
    if isinstance(X, QaExample):
        raise TypeError("expected a sequence of QaExample, got a single example")
    examples = list(X)
    if not examples:
        raise ValueError("at least one question is required")
    for ex in examples:
        if not isinstance(ex, QaExample):
            raise TypeError(f"expected QaExample items, got {type(ex).__name__}")
        ex.validate(kg)
        if require_answers and not ex.answers:
            raise KGError(f"question {ex.id} has no gold answer")
    return examples


def build_vocabulary(examples: Sequence[QaExample], kg: KnowledgeGraph) -> list[str]:
    """Question tokens followed by relation-label tokens, first-seen order."""
    words: list[str] = []
    for ex in examples:
        words.extend(tokenize(ex.question))
    for label in kg.relation_labels:
        words.extend(tokenize(label))
    return list(dict.fromkeys(words))


class GnnRetriever(BaseEstimator):
    """Graph step: embeds questions and entities jointly and ranks entities by distance."""

    def __init__(self, kg=None, num_layers: int = 3, dim: int = 64, token_dim: int = 32, margin: float = 1.0,
                 top_n: int = 10, num_pairs: int = 32, epochs: int = 30, lr: float = 1e-3, seed: int = 0,
                 tokens: TokenEmbeddingProvider | None = None):
        self.kg = kg
        self.num_layers = num_layers
        self.dim = dim
        self.token_dim = token_dim
        self.margin = margin
        self.top_n = top_n
        self.num_pairs = num_pairs
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.tokens = tokens

    def _config(self) -> GnnConfig:
        token_dim = self.tokens.dim if self.tokens is not None else self.token_dim
        cfg = GnnConfig(num_layers=self.num_layers, dim=self.dim, token_dim=token_dim, margin=self.margin,
                        top_n=self.top_n, num_pairs=self.num_pairs, epochs=self.epochs, lr=self.lr,
                        seed=self.seed)
        cfg.validate()
        return cfg

    def fit(self, X, y=None, validation: Sequence[QaExample] = ()):
        kg = check_kg(self.kg)
        examples = check_examples(X, kg, require_answers=True)
        valid = check_examples(validation, kg, require_answers=True) if validation else []
        vocab = build_vocabulary(examples, kg)
        self.model_ = GnnModel(vocab, self._config(), self.tokens)
        self.train_log_: TrainLog = train(self.model_, examples, kg, valid)
        return self

    def candidates(self, X, n: int | None = None) -> list[list[tuple[int, float]]]:
        check_is_fitted(self, "model_")
        kg = check_kg(self.kg)
        return [rank_entities(self.model_, ex, kg, n or self.top_n) for ex in check_examples(X, kg)]

    def predict(self, X) -> np.ndarray:
        return np.array([c[0][0] for c in self.candidates(X, 1)], dtype=np.int64)

    def score(self, X, y=None) -> float:
        examples = check_examples(X, check_kg(self.kg), require_answers=True)
        pred = self.predict(examples)
        return float(np.mean([p in set(ex.answers) for p, ex in zip(pred, examples)]))


class TwoStepQA(BaseEstimator):
    """Full answerer: graph retrieval, then expression selection with a fine-tuned text encoder.

    ``finetune_encoder=False`` keeps the text encoder at its initialization,
    which is useful as an ablation.
    """

    def __init__(self, kg=None, num_layers: int = 3, dim: int = 64, token_dim: int = 32, margin: float = 1.0,
                 top_n: int = 10, num_pairs: int = 32, epochs: int = 30, lr: float = 1e-3, text_dim: int = 64,
                 margin_ft: float = 0.1, ft_epochs: int = 10, ft_lr: float = 1e-3, max_len: int = 2,
                 multiplier: float = 1.05, fast: bool = False, finetune_encoder: bool = True, seed: int = 0,
                 tokens: TokenEmbeddingProvider | None = None):
        self.kg = kg
        self.num_layers = num_layers
        self.dim = dim
        self.token_dim = token_dim
        self.margin = margin
        self.top_n = top_n
        self.num_pairs = num_pairs
        self.epochs = epochs
        self.lr = lr
        self.text_dim = text_dim
        self.margin_ft = margin_ft
        self.ft_epochs = ft_epochs
        self.ft_lr = ft_lr
        self.max_len = max_len
        self.multiplier = multiplier
        self.fast = fast
        self.finetune_encoder = finetune_encoder
        self.seed = seed
        self.tokens = tokens

    def pipeline_config(self) -> PipelineConfig:
        cfg = PipelineConfig(top_n=self.top_n, max_len=self.max_len, multiplier=self.multiplier, fast=self.fast)
        cfg.validate()
        return cfg

    def fit(self, X, y=None, validation: Sequence[QaExample] = ()):
        kg = check_kg(self.kg)
        examples = check_examples(X, kg, require_answers=True)
        self.retriever_ = GnnRetriever(kg, self.num_layers, self.dim, self.token_dim, self.margin, self.top_n,
                                       self.num_pairs, self.epochs, self.lr, self.seed, self.tokens)
        self.retriever_.fit(examples, validation=validation)
        model = self.retriever_.model_
        self.encoder_ = TextEncoder(model.tokens, self.text_dim, self.seed)
        self.finetune_log_ = FinetuneLog()
        if self.finetune_encoder:
            cfg = self.pipeline_config()
            train_items: list[LabeledQuestion] = weak_labels(model, examples, kg, cfg)
            valid_items = weak_labels(model, list(validation), kg, cfg) if validation else []
            ft = FinetuneConfig(margin=self.margin_ft, epochs=self.ft_epochs, lr=self.ft_lr, seed=self.seed)
            self.finetune_log_ = finetune(self.encoder_, train_items, ft, valid_items)
        return self

    def answer(self, X) -> list[AnswerResult]:
        check_is_fitted(self, ["retriever_", "encoder_"])
        kg = check_kg(self.kg)
        return run_pipeline(self.retriever_.model_, self.encoder_, check_examples(X, kg), kg,
                            self.pipeline_config())

    def predict(self, X) -> np.ndarray:
        return np.array([r.top1 for r in self.answer(X)], dtype=np.int64)

    def score(self, X, y=None) -> float:
        examples = check_examples(X, check_kg(self.kg), require_answers=True)
        return score_qa(examples, self.answer(examples)).hits_at_1

    def explanation_score(self, X) -> float:
        kg = check_kg(self.kg)
        examples = check_examples(X, kg)
        return score_explanations(examples, self.answer(examples), kg).f1
