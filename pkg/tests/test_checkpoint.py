import struct

import numpy as np
import pytest

from rationale_kgqa.checkpoint import (MAGIC, Checkpoint, CheckpointError, decode_checkpoint, encode_checkpoint,
                                       load_encoder, load_gnn, read_checkpoint, save_encoder, save_gnn)
from rationale_kgqa.encoder import TokenEmbeddingProvider
from rationale_kgqa.gnn import GnnConfig, GnnModel
from rationale_kgqa.scorer import TextEncoder

VOCAB = ["what", "is", "the", "capital", "of"]


def _model(provider=None):
    return GnnModel(VOCAB, GnnConfig(num_layers=2, dim=5, token_dim=4, seed=3), provider)


def _same_state(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return sa.keys() == sb.keys() and all(np.array_equal(sa[k], sb[k]) for k in sa)


class TestFormat:
    def test_layout(self):
        blob = encode_checkpoint(Checkpoint("gnn", {"a": 1}, ["x"], {"w": np.arange(6.0).reshape(2, 3)}))
        assert blob[:8] == MAGIC
        (length,) = struct.unpack("<I", blob[8:12])
        payload = blob[12 + length:]
        assert np.array_equal(np.frombuffer(payload, "<f8"), np.arange(6.0))
        assert b'"kind":"gnn"' in blob[12:12 + length]

    def test_round_trip_preserves_bits(self):
        rng = np.random.default_rng(0)
        tensors = {"a": rng.normal(size=(3, 4)), "b": np.array([np.nextafter(0, 1), -0.0, 1e308]), "c": np.zeros(0)}
        back = decode_checkpoint(encode_checkpoint(Checkpoint("k", {}, [], tensors, {"m": 1})))
        for k, v in tensors.items():
            assert back.tensors[k].tobytes() == v.tobytes() and back.tensors[k].shape == v.shape
        assert back.meta == {"m": 1}

    @pytest.mark.parametrize("mutate, message", [
        (lambda b: b"XXXXXXXX" + b[8:], "magic"),
        (lambda b: b[:8], "truncated"),
        (lambda b: b[:-8], "past the end"),
        (lambda b: b[:12] + b"#" + b[13:], "corrupt"),
        (lambda b: b[:12] + b'{"format_version":1}' + b" " * (struct.unpack("<I", b[8:12])[0] - 20)
         + b[12 + struct.unpack("<I", b[8:12])[0]:], "missing"),
    ])
    def test_corrupt_files(self, mutate, message):
        blob = encode_checkpoint(Checkpoint("gnn", {}, [], {"w": np.ones(4)}))
        with pytest.raises(CheckpointError, match=message):
            decode_checkpoint(mutate(blob))

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "nope.ckpt")


class TestModels:
    def test_gnn_bit_exact(self, tmp_path):
        model = _model()
        save_gnn(tmp_path / "a.ckpt", model)
        back = load_gnn(tmp_path / "a.ckpt")
        assert _same_state(model, back)
        assert back.config == model.config
        assert back.tokens.tokens == model.tokens.tokens
        save_gnn(tmp_path / "b.ckpt", back)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_gnn_with_file_tokens(self, tmp_path):
        provider = TokenEmbeddingProvider(VOCAB, 4, np.random.default_rng(1), trainable=False)
        provider.table.requires_grad = False
        model = _model(provider)
        save_gnn(tmp_path / "a.ckpt", model)
        back = load_gnn(tmp_path / "a.ckpt")
        assert not back.tokens.trainable
        assert np.array_equal(back.tokens.table.data, provider.table.data)
        assert _same_state(model, back)

    def test_encoder_bit_exact(self, tmp_path):
        enc = TextEncoder(_model().tokens, 6, seed=2)
        enc.table.data += 0.125
        save_encoder(tmp_path / "e.ckpt", enc)
        back = load_encoder(tmp_path / "e.ckpt")
        assert _same_state(enc, back)
        assert back.vocabulary == enc.vocabulary and back.dim == 6
        save_encoder(tmp_path / "f.ckpt", back)
        assert (tmp_path / "e.ckpt").read_bytes() == (tmp_path / "f.ckpt").read_bytes()

    def test_loaded_model_gives_same_outputs(self, tmp_path, fig1_kg):
        from rationale_kgqa.data import QaExample
        from rationale_kgqa.gnn import rank_entities
        model = _model()
        save_gnn(tmp_path / "a.ckpt", model)
        ex = QaExample("q", "what is the capital of", [0], [1])
        assert rank_entities(model, ex, fig1_kg, 4) == rank_entities(load_gnn(tmp_path / "a.ckpt"), ex, fig1_kg, 4)

    def test_kind_mismatch(self, tmp_path):
        save_gnn(tmp_path / "a.ckpt", _model())
        with pytest.raises(CheckpointError):
            load_encoder(tmp_path / "a.ckpt")
