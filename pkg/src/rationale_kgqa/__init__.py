"""Knowledge-graph question answering that returns answers together with reasoning subgraphs.

Step one embeds the question and every entity with a question-conditioned
graph network and keeps the entities nearest to the question.  Step two
extracts the paths linking each candidate to the topic entities, renders
them as text, and picks the rendering a text encoder finds closest to the
question.
"""

from .checkpoint import load_encoder, load_gnn, save_encoder, save_gnn
from .data import QaExample, load_dataset, save_dataset
from .encoder import QuestionEncoder, TokenEmbeddingProvider, tokenize
from .estimators import GnnRetriever, TwoStepQA
from .gnn import GnnConfig, GnnModel
from .kg import KnowledgeGraph, load_kg, save_kg
from .pipeline import AnswerResult, Metrics, PipelineConfig, answer, answer_set, evaluate_explanations, evaluate_qa
from .scorer import TextEncoder, finetune, predict_pos_neg, select_optimal
from .synthetic import SyntheticConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AnswerResult", "GnnConfig", "GnnModel", "GnnRetriever", "KnowledgeGraph", "Metrics", "PipelineConfig",
    "QaExample", "QuestionEncoder", "SyntheticConfig", "TextEncoder", "TokenEmbeddingProvider", "TwoStepQA",
    "answer", "answer_set", "evaluate_explanations", "evaluate_qa", "finetune", "generate_synthetic",
    "load_dataset", "load_encoder", "load_gnn", "load_kg", "predict_pos_neg", "save_dataset", "save_encoder",
    "save_gnn", "save_kg", "select_optimal", "tokenize",
]
