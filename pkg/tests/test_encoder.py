import numpy as np
import pytest

from rationale_kgqa.encoder import (PAD, UNK, QuestionEncoder, TokenEmbeddingProvider, tokenize,
                                    tokenize_and_mask)
from rationale_kgqa.numerics import DimensionError, Tensor, bigru_encode
from rationale_kgqa.numerics.gradcheck import check_gradients
from rationale_kgqa.numerics import ops


def test_tokenize_lowercases_and_splits():
    assert tokenize("What state is Saint-Louis University in?") == \
        ["what", "state", "is", "saint", "louis", "university", "in"]


def test_mask_removes_topic_mentions_longest_first():
    toks = tokenize_and_mask("who directed a movie starring Michael Keaton in California",
                             ["Michael Keaton", "California", "Michael"])
    assert toks == ["who", "directed", "a", "movie", "starring", "in"]


def test_mask_falls_back_when_everything_is_masked():
    assert tokenize_and_mask("California", ["California"]) == ["california"]


class TestProvider:
    def test_reserved_rows(self):
        p = TokenEmbeddingProvider(["a", "b", "a"], 4, np.random.default_rng(0))
        assert p.tokens[:2] == [PAD, UNK]
        assert p.tokens[2:] == ["a", "b"]
        assert np.array_equal(p.table.data[0], np.zeros(4))
        assert p.ids(["b", "zzz"]) == [3, 1]

    def test_file_round_trip(self, tmp_path):
        p = TokenEmbeddingProvider(["state", "of"], 3, np.random.default_rng(1))
        path = tmp_path / "tok.txt"
        p.to_file(path)
        q = TokenEmbeddingProvider.from_file(path)
        assert q.tokens == p.tokens
        assert np.array_equal(q.table.data, p.table.data)
        assert q.mode == "file" and not q.table.requires_grad

    def test_file_with_bad_row(self, tmp_path):
        path = tmp_path / "tok.txt"
        path.write_text("3\nfoo\t1 2\n")
        with pytest.raises(ValueError):
            TokenEmbeddingProvider.from_file(path)

    def test_shape_check(self):
        with pytest.raises(DimensionError):
            TokenEmbeddingProvider(["a"], 2, vectors=np.zeros((2, 2)))


class TestQuestionEncoder:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.tokens = TokenEmbeddingProvider(["what", "is", "the", "state", "of"], 4, rng)
        self.enc = QuestionEncoder(4, 5, rng)
        self.ids = self.tokens.ids(["what", "is", "the", "state", "of"])

    def test_general_embedding_is_bigru_mean(self):
        rows = [self.tokens.table.data[i] for i in self.ids]
        expected, _ = bigru_encode(rows, self.enc.general_fwd, self.enc.general_bwd)
        assert np.allclose(self.enc.encode_general(self.tokens.table, self.ids).data, expected.data, atol=1e-14)

    def test_layerwise_carries_final_states(self):
        out = self.enc.encode(self.tokens.table, self.ids, 3)
        rows = [self.tokens.table.data[i] for i in self.ids]
        prev = (None, None)
        for qk, (hf, hb) in out.layer_states:
            ref, (rf, rb) = bigru_encode(rows, self.enc.layer_fwd, self.enc.layer_bwd, *prev)
            assert np.allclose(qk.data, ref.data, atol=1e-13)
            prev = (rf.data, rb.data)
        refs = out.references
        assert len(refs) == 3
        # carried state makes the layers differ even though parameters are shared
        assert not np.allclose(refs[0].data, refs[1].data)

    def test_gradient_through_all_layers(self):
        table = self.tokens.table

        def loss():
            out = self.enc.encode(table, self.ids, 2)
            return ops.sum(out.q * out.references[1]) + ops.sum(ops.tanh(out.references[0]))

        params = {"table": table, **self.enc.parameters()}
        assert max(check_gradients(loss, params).values()) < 1e-6

    def test_empty_question_rejected(self):
        with pytest.raises(DimensionError):
            self.enc.encode_general(self.tokens.table, [])

    def test_wrong_carried_dimension_rejected(self):
        bad = (Tensor(np.zeros(3)), Tensor(np.zeros(3)))
        with pytest.raises(DimensionError):
            self.enc.encode_layerwise(self.tokens.table, self.ids, bad)
