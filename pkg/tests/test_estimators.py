import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rationale_kgqa.data import QaExample
from rationale_kgqa.estimators import GnnRetriever, TwoStepQA, build_vocabulary, check_examples
from rationale_kgqa.kg import KGError
from rationale_kgqa.synthetic import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="module")
def data():
    return generate_synthetic(SyntheticConfig(num_entities=40, hops=1, train=12, valid=4, test=6, seed=1))


class TestValidation:
    def test_check_examples(self, data):
        kg, splits = data
        assert check_examples(splits["train"], kg) == splits["train"]
        with pytest.raises(ValueError):
            check_examples([], kg)
        with pytest.raises(TypeError):
            check_examples(splits["train"][0], kg)
        with pytest.raises(TypeError):
            check_examples(["what"], kg)
        with pytest.raises(KGError):
            check_examples([QaExample("q", "what", [0], [])], kg, require_answers=True)
        with pytest.raises(KGError):
            check_examples([QaExample("q", "what", [999], [1])], kg)

    def test_vocabulary_order(self, fig1_kg):
        ex = QaExample("q", "who is the director", [0], [1])
        vocab = build_vocabulary([ex], fig1_kg)
        assert vocab[:4] == ["who", "is", "the", "director"]
        assert "birthplace" in vocab and len(vocab) == len(set(vocab))


class TestRetriever:
    def test_params_and_clone(self, data):
        kg, _ = data
        est = GnnRetriever(kg, dim=8, epochs=2, seed=5)
        params = est.get_params()
        assert params["dim"] == 8 and params["seed"] == 5 and params["kg"] is kg
        twin = clone(est)
        assert twin.get_params()["epochs"] == 2 and twin is not est
        est.set_params(top_n=3)
        assert est.top_n == 3

    def test_unfitted(self, data):
        kg, splits = data
        with pytest.raises(NotFittedError):
            GnnRetriever(kg).predict(splits["test"])

    def test_fit_predict_deterministic(self, data):
        kg, splits = data
        a = GnnRetriever(kg, dim=8, token_dim=6, epochs=2, seed=0).fit(splits["train"])
        b = GnnRetriever(kg, dim=8, token_dim=6, epochs=2, seed=0).fit(splits["train"])
        pa = a.predict(splits["test"])
        assert pa.dtype == np.int64 and pa.shape == (6,)
        assert np.array_equal(pa, b.predict(splits["test"]))
        assert 0.0 <= a.score(splits["test"]) <= 1.0
        cands = a.candidates(splits["test"], 4)
        assert all(len(c) == 4 and [d for _, d in c] == sorted(d for _, d in c) for c in cands)

    def test_bad_kg(self, data):
        with pytest.raises(TypeError):
            GnnRetriever("graph").fit(data[1]["train"])

    def test_bad_hyperparameter(self, data):
        kg, splits = data
        with pytest.raises(ValueError):
            GnnRetriever(kg, num_layers=0).fit(splits["train"])


class TestTwoStep:
    def test_fit_answer_score(self, data):
        kg, splits = data
        est = TwoStepQA(kg, dim=8, token_dim=6, text_dim=8, epochs=2, ft_epochs=2, max_len=1, seed=0)
        est.fit(splits["train"], validation=splits["valid"])
        results = est.answer(splits["test"])
        assert len(results) == 6
        assert np.array_equal(est.predict(splits["test"]), [r.top1 for r in results])
        assert 0.0 <= est.score(splits["test"]) <= 1.0
        assert 0.0 <= est.explanation_score(splits["test"]) <= 1.0
        assert len(est.finetune_log_.epoch_loss) == 2

    def test_without_finetuning(self, data):
        kg, splits = data
        est = TwoStepQA(kg, dim=8, token_dim=6, text_dim=8, epochs=1, finetune_encoder=False)
        est.fit(splits["train"])
        assert est.finetune_log_.epoch_loss == []
        assert clone(est).get_params()["finetune_encoder"] is False

    def test_pipeline_config(self):
        cfg = TwoStepQA(top_n=7, max_len=3, multiplier=1.2, fast=True).pipeline_config()
        assert (cfg.top_n, cfg.max_len, cfg.multiplier, cfg.fast) == (7, 3, 1.2, True)
