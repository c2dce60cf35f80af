"""Command-line entry points.

Usage: ``rkgqa COMMAND [options]`` with COMMAND one of ``synth``, ``train-gnn``,
``finetune``, ``answer``, ``eval`` and ``interactive``.  Settings come from
built-in defaults, then an optional ``--config`` file of ``key = value``
lines, then command-line flags, later sources winning.

A graph (``--kg``) is a directory holding ``triples.tsv``
(``head<TAB>relation<TAB>tail`` ids), ``entities.tsv`` and ``relations.tsv``
(``id<TAB>label``).

Exit codes: 0 success, 2 bad usage or configuration, 3 missing input file,
4 invalid graph or dataset contents, 5 unreadable or mismatched checkpoint,
6 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

from .checkpoint import CheckpointError, load_encoder, load_gnn, save_encoder, save_gnn
from .data import QaExample, load_dataset, save_dataset
from .encoder import TokenEmbeddingProvider, tokenize
from .estimators import build_vocabulary
from .gnn import GnnConfig, GnnModel, train
from .kg import KGError, KnowledgeGraph, load_kg, save_kg
from .numerics.tensor import NumericError
from .pipeline import PipelineConfig, metrics_report, run_pipeline, score_explanations, score_qa, weak_labels
from .scorer import FinetuneConfig, TextEncoder, finetune, load_label_cache, save_label_cache
from .synthetic import SyntheticConfig, generate_synthetic

log = logging.getLogger("rationale_kgqa")

EXIT_OK, EXIT_USAGE, EXIT_PATH, EXIT_DATA, EXIT_CHECKPOINT, EXIT_NUMERIC = 0, 2, 3, 4, 5, 6


class UsageError(Exception):
    pass


class MissingPathError(Exception):
    pass


@dataclass
class RunConfig:
    kg: str | None = None
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    tokens: str | None = None
    ckpt_gnn: str | None = None
    ckpt_encoder: str | None = None
    out: str | None = None
    dump_expressions: str | None = None
    layers: int = 3
    dim: int = 64
    token_dim: int = 32
    text_dim: int = 64
    margin: float = 1.0
    margin_ft: float = 0.1
    top_n: int = 10
    max_len: int = 2
    multiplier: float = 1.05
    epochs: int = 30
    ft_epochs: int = 10
    lr: float = 1e-3
    ft_lr: float = 1e-3
    pairs: int = 32
    seed: int = 0
    fast: bool = False
    skip_finetune: bool = False
    entities: int = 500
    hops: int = 2
    num_train: int = 200
    num_valid: int = 25
    num_test: int = 50

    def validate(self) -> None:
        if self.margin < 0 or self.margin_ft < 0:
            raise UsageError("margins must be non-negative")
        for name in ("top_n", "layers", "max_len", "dim", "token_dim", "text_dim", "entities", "hops"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name.replace('_', '-')} must be >= 1")
        for name in ("epochs", "ft_epochs", "pairs", "num_train", "num_valid", "num_test"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name.replace('_', '-')} must be >= 0")
        if self.multiplier < 1.0:
            raise UsageError("multiplier must be >= 1")
        if self.lr <= 0 or self.ft_lr <= 0:
            raise UsageError("learning rates must be positive")

    def gnn_config(self, token_dim: int | None = None) -> GnnConfig:
        return GnnConfig(num_layers=self.layers, dim=self.dim, token_dim=token_dim or self.token_dim,
                         margin=self.margin, top_n=self.top_n, num_pairs=self.pairs, epochs=self.epochs,
                         lr=self.lr, seed=self.seed)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(top_n=self.top_n, max_len=self.max_len, multiplier=self.multiplier, fast=self.fast)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            low = value.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(value)
            return low in ("1", "true", "yes", "on")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise UsageError(f"config value for {key!r} is not a valid {kind}: {value!r}") from None
    return value


def read_config_file(path) -> dict:
    """Flat ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise MissingPathError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        key, found, value = line.partition(sep)
        key = key.strip().replace("-", "_")
        if not found or key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown or malformed setting {raw.strip()!r}")
        out[key] = _coerce(key, value.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rkgqa", description="Knowledge-graph question answering with "
                                     "graph retrieval and explicit reasoning subgraphs.")
    parser.add_argument("command", choices=["synth", "train-gnn", "finetune", "answer", "eval", "interactive"])
    parser.add_argument("--config", help="flat key = value settings file")
    parser.add_argument("--log-level", default="INFO")
    S = argparse.SUPPRESS
    paths = parser.add_argument_group("paths")
    paths.add_argument("--kg", default=S, help="graph directory")
    paths.add_argument("--train", default=S, help="training questions (JSON lines)")
    paths.add_argument("--valid", default=S, help="validation questions (JSON lines)")
    paths.add_argument("--test", default=S, help="questions to answer or evaluate (JSON lines)")
    paths.add_argument("--tokens", default=S, help="token-embedding file; fixed vectors instead of learned")
    paths.add_argument("--ckpt-gnn", dest="ckpt_gnn", default=S)
    paths.add_argument("--ckpt-encoder", dest="ckpt_encoder", default=S)
    paths.add_argument("--out", default=S, help="output file or directory, depending on the command")
    paths.add_argument("--dump-expressions", dest="dump_expressions", default=S,
                       help="write every candidate expression per question here (answer command)")
    hp = parser.add_argument_group("hyperparameters")
    for flag, kind in [("--layers", int), ("--dim", int), ("--token-dim", int), ("--text-dim", int),
                       ("--margin", float), ("--margin-ft", float), ("--top-n", int), ("--max-len", int),
                       ("--multiplier", float), ("--epochs", int), ("--ft-epochs", int), ("--lr", float),
                       ("--ft-lr", float), ("--pairs", int), ("--seed", int), ("--entities", int),
                       ("--hops", int), ("--num-train", int), ("--num-valid", int), ("--num-test", int)]:
        hp.add_argument(flag, type=kind, default=S, dest=flag[2:].replace("-", "_"))
    hp.add_argument("--fast", action="store_true", default=S, help="shortest paths only in extraction")
    hp.add_argument("--skip-finetune", dest="skip_finetune", action="store_true", default=S)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = asdict(RunConfig())
    if args.config:
        values.update(read_config_file(args.config))
    values.update({k: v for k, v in vars(args).items() if k in _FIELD_TYPES})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _need(cfg: RunConfig, name: str, must_exist: bool = True) -> Path:
    value = getattr(cfg, name)
    if not value:
        raise UsageError(f"--{name.replace('_', '-')} is required for this command")
    p = Path(value)
    if must_exist and not p.exists():
        raise MissingPathError(f"{name.replace('_', '-')} path not found: {value}")
    return p


def kg_files(directory: Path) -> tuple[Path, Path, Path]:
    return directory / "triples.tsv", directory / "entities.tsv", directory / "relations.tsv"


def load_kg_dir(cfg: RunConfig) -> KnowledgeGraph:
    directory = _need(cfg, "kg")
    files = kg_files(directory)
    for f in files:
        if not f.is_file():
            raise MissingPathError(f"graph file not found: {f}")
    return load_kg(*files)


def _dataset(cfg: RunConfig, name: str, kg: KnowledgeGraph, required: bool = True) -> list[QaExample]:
    if not getattr(cfg, name) and not required:
        return []
    return load_dataset(_need(cfg, name), kg)


def _label_cache_path(cfg: RunConfig, split: str) -> Path:
    base = Path(cfg.out) if cfg.out else Path(_need(cfg, "ckpt_encoder", must_exist=False)).parent
    return base / f"labels-{split}.jsonl"


def _write_text(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    out = _need(cfg, "out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    kg, splits = generate_synthetic(SyntheticConfig(num_entities=cfg.entities, hops=cfg.hops, train=cfg.num_train,
                                                    valid=cfg.num_valid, test=cfg.num_test, seed=cfg.seed))
    save_kg(kg, *kg_files(out))
    for name, examples in splits.items():
        save_dataset(out / f"{name}.jsonl", examples, kg)
    log.info("wrote synthetic graph (%s) and splits to %s", kg.summary(), out)
    return EXIT_OK


def cmd_train_gnn(cfg: RunConfig) -> int:
    kg = load_kg_dir(cfg)
    train_set = _dataset(cfg, "train", kg)
    valid_set = _dataset(cfg, "valid", kg, required=False)
    ckpt = _need(cfg, "ckpt_gnn", must_exist=False)
    provider = TokenEmbeddingProvider.from_file(_need(cfg, "tokens")) if cfg.tokens else None
    token_dim = provider.dim if provider is not None else None
    model = GnnModel(build_vocabulary(train_set, kg), cfg.gnn_config(token_dim), provider)
    history = train(model, train_set, kg, valid_set)
    save_gnn(ckpt, model)
    log.info("saved graph model to %s (best epoch %d)", ckpt, history.best_epoch)
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(asdict(history), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _labels_for(cfg: RunConfig, split: str, model: GnnModel, examples: list[QaExample], kg: KnowledgeGraph):
    path = _label_cache_path(cfg, split)
    if path.is_file():
        log.info("weak labels for %s loaded from cache %s; regeneration skipped", split, path)
        return load_label_cache(path)
    items = weak_labels(model, examples, kg, cfg.pipeline_config())
    path.parent.mkdir(parents=True, exist_ok=True)
    save_label_cache(path, items)
    log.info("weak labels for %s written to %s", split, path)
    return items


def cmd_finetune(cfg: RunConfig) -> int:
    kg = load_kg_dir(cfg)
    model = load_gnn(_need(cfg, "ckpt_gnn"))
    out = _need(cfg, "ckpt_encoder", must_exist=False)
    train_set = _dataset(cfg, "train", kg)
    valid_set = _dataset(cfg, "valid", kg, required=False)
    encoder = TextEncoder(model.tokens, cfg.text_dim, cfg.seed)
    if not cfg.skip_finetune:
        train_items = _labels_for(cfg, "train", model, train_set, kg)
        valid_items = _labels_for(cfg, "valid", model, valid_set, kg) if valid_set else []
        ft = FinetuneConfig(margin=cfg.margin_ft, epochs=cfg.ft_epochs, lr=cfg.ft_lr, seed=cfg.seed)

        def report(epoch: int, loss: float, acc: float | None) -> None:
            log.info("epoch %d: triplet loss %.4f, validation selection accuracy %s", epoch, loss, acc)

        history = finetune(encoder, train_items, ft, valid_items, callback=report)
        for qid in history.skipped:
            log.info("question %s skipped: no positive or no negative expression", qid)
    save_encoder(out, encoder)
    log.info("saved text encoder to %s", out)
    return EXIT_OK


def _load_models(cfg: RunConfig):
    model = load_gnn(_need(cfg, "ckpt_gnn"))
    encoder = load_encoder(_need(cfg, "ckpt_encoder"))
    return model, encoder


def cmd_answer(cfg: RunConfig) -> int:
    kg = load_kg_dir(cfg)
    model, encoder = _load_models(cfg)
    examples = _dataset(cfg, "test", kg)
    results = run_pipeline(model, encoder, examples, kg, cfg.pipeline_config())
    lines = []
    for res in results:
        rec = res.to_record(kg)
        rec["fast"] = cfg.fast
        lines.append(json.dumps(rec, sort_keys=True))
    _write_text(cfg.out, "\n".join(lines) + "\n")
    if cfg.dump_expressions:
        with open(cfg.dump_expressions, "w", encoding="utf-8") as fh:
            for res in results:
                fh.write(f"# {res.question_id}\n{res.expressions_dump}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    kg = load_kg_dir(cfg)
    model, encoder = _load_models(cfg)
    examples = _dataset(cfg, "test", kg)
    results = run_pipeline(model, encoder, examples, kg, cfg.pipeline_config())
    qa = score_qa(examples, results)
    expl = score_explanations(examples, results, kg) if all(ex.gold_chain for ex in examples) else None
    run = {"questions": len(examples), "fast": cfg.fast, "top_n": cfg.top_n, "max_len": cfg.max_len,
           "multiplier": cfg.multiplier}
    _write_text(cfg.out, metrics_report(qa, expl, run))
    return EXIT_OK


def find_topic_entities(question: str, kg: KnowledgeGraph) -> list[int]:
    """Entities whose label appears as a token span of the question, longest spans first."""
    index: dict[tuple[str, ...], int] = {}
    for eid, label in enumerate(kg.entity_labels):
        key = tuple(tokenize(label))
        if key and key not in index:
            index[key] = eid
    tokens = tokenize(question)
    taken = [False] * len(tokens)
    found: list[tuple[int, int]] = []
    longest = max((len(k) for k in index), default=0)
    for n in range(min(longest, len(tokens)), 0, -1):
        for i in range(len(tokens) - n + 1):
            if any(taken[i:i + n]):
                continue
            eid = index.get(tuple(tokens[i:i + n]))
            if eid is not None:
                found.append((i, eid))
                for j in range(i, i + n):
                    taken[j] = True
    return list(dict.fromkeys(e for _, e in sorted(found)))


def cmd_interactive(cfg: RunConfig, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    kg = load_kg_dir(cfg)
    model, encoder = _load_models(cfg)
    pcfg = cfg.pipeline_config()
    stdout.write("question> ")
    stdout.flush()
    for n, line in enumerate(stdin):
        question = line.strip()
        if question in ("quit", "exit"):
            break
        if question:
            topics = find_topic_entities(question, kg)
            if not topics:
                stdout.write("no known entity mentioned in the question\n")
            else:
                ex = QaExample(f"interactive-{n}", question, topics, [])
                res = run_pipeline(model, encoder, [ex], kg, pcfg)[0]
                stdout.write(f"answer: {kg.entity_labels[res.top1]}")
                others = [kg.entity_labels[e] for e in res.answer_ids if e != res.top1]
                stdout.write(f" (also: {', '.join(others)})\n" if others else "\n")
                if res.fallback:
                    stdout.write("no reasoning subgraph found; answer from graph distances only\n")
                else:
                    stdout.write(f"expression: {res.expression}\n")
                    for h, r, t in sorted(res.predicted_triples(kg)):
                        stdout.write(f"  ({kg.entity_labels[h]}, {kg.relation_labels[r]}, {kg.entity_labels[t]})\n")
        stdout.write("question> ")
        stdout.flush()
    stdout.write("\n")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train-gnn": cmd_train_gnn,
    "finetune": cmd_finetune,
    "answer": cmd_answer,
    "eval": cmd_eval,
    "interactive": cmd_interactive,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (MissingPathError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_PATH
    except CheckpointError as exc:
        log.error("%s", exc)
        return EXIT_CHECKPOINT
    except NumericError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (KGError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
