"""Binary checkpoint format for the graph model and the text encoder.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"RKGQACK1"
    offset 8   4 bytes   uint32 header length L
    offset 12  L bytes   UTF-8 JSON header, keys sorted, no whitespace
    offset 12+L          tensor payload

The header holds ``format_version``, ``kind`` (``"gnn"`` or ``"text_encoder"``),
``config`` (constructor settings), ``vocabulary`` (token list, index order),
``meta`` (free-form) and ``tensors``: a list of ``{"name", "shape", "offset",
"nbytes"}`` where ``offset`` is relative to the payload start.  Each tensor is
stored as little-endian float64 in C order, in header order, with no padding.

Nothing time- or host-dependent is written, so saving the same model twice
gives identical bytes, and load followed by save reproduces the file exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encoder import TokenEmbeddingProvider
from .gnn import GnnConfig, GnnModel
from .scorer import TextEncoder

MAGIC = b"RKGQACK1"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    vocabulary: list[str]
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {"format_version": FORMAT_VERSION, "kind": ckpt.kind, "config": ckpt.config,
              "vocabulary": ckpt.vocabulary, "meta": ckpt.meta, "tensors": entries}
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(raw)) + raw + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(blob) < 12:
        raise CheckpointError("truncated checkpoint header")
    (length,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    missing = {"kind", "config", "vocabulary", "meta", "tensors"} - set(header)
    if missing:
        raise CheckpointError(f"checkpoint header is missing {sorted(missing)}")
    payload = memoryview(blob)[12 + length:]
    tensors = {}
    for entry in header["tensors"]:
        start, size = entry["offset"], entry["nbytes"]
        if start + size > len(payload):
            raise CheckpointError(f"tensor {entry['name']} runs past the end of the file")
        arr = np.frombuffer(payload[start:start + size], dtype=_DTYPE)
        if arr.size != int(np.prod(entry["shape"], dtype=np.int64)):
            raise CheckpointError(f"tensor {entry['name']}: size does not match shape")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
    return Checkpoint(header["kind"], header["config"], header["vocabulary"], tensors, header["meta"])


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def read_checkpoint(path) -> Checkpoint:
    try:
        return decode_checkpoint(Path(path).read_bytes())
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None


# ---------------------------------------------------------------------------
# model <-> checkpoint
# ---------------------------------------------------------------------------

def gnn_to_checkpoint(model: GnnModel) -> Checkpoint:
    tensors = model.state_dict()
    if not model.tokens.trainable:
        tensors["tokens.table"] = model.tokens.table.data.copy()
    return Checkpoint("gnn", asdict(model.config), model.tokens.tokens[2:], tensors,
                      {"token_mode": model.tokens.mode})


def gnn_from_checkpoint(ckpt: Checkpoint) -> GnnModel:
    if ckpt.kind != "gnn":
        raise CheckpointError(f"expected a gnn checkpoint, found {ckpt.kind!r}")
    model = GnnModel(ckpt.vocabulary, GnnConfig(**ckpt.config))
    tensors = dict(ckpt.tensors)
    if ckpt.meta.get("token_mode") == "file":
        table = tensors.pop("tokens.table")
        model.tokens = TokenEmbeddingProvider(ckpt.vocabulary, table.shape[1], vectors=table, trainable=False)
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not fit the model: {exc}") from None
    return model


def encoder_to_checkpoint(encoder: TextEncoder) -> Checkpoint:
    config = {"dim": encoder.dim, "token_dim": encoder.token_dim, "seed": encoder.seed}
    return Checkpoint("text_encoder", config, encoder.vocabulary[2:], encoder.state_dict())


def encoder_from_checkpoint(ckpt: Checkpoint) -> TextEncoder:
    if ckpt.kind != "text_encoder":
        raise CheckpointError(f"expected a text_encoder checkpoint, found {ckpt.kind!r}")
    cfg = ckpt.config
    provider = TokenEmbeddingProvider(ckpt.vocabulary, cfg["token_dim"],
                                      vectors=np.zeros((len(ckpt.vocabulary) + 2, cfg["token_dim"])))
    encoder = TextEncoder(provider, cfg["dim"], cfg["seed"])
    try:
        encoder.load_state_dict(ckpt.tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint does not fit the encoder: {exc}") from None
    return encoder


def save_gnn(path, model: GnnModel) -> None:
    write_checkpoint(path, gnn_to_checkpoint(model))


def load_gnn(path) -> GnnModel:
    return gnn_from_checkpoint(read_checkpoint(path))


def save_encoder(path, encoder: TextEncoder) -> None:
    write_checkpoint(path, encoder_to_checkpoint(encoder))


def load_encoder(path) -> TextEncoder:
    return encoder_from_checkpoint(read_checkpoint(path))
