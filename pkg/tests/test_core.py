import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotswitch.core import (
    Embedding,
    FinishReason,
    Query,
    ReasoningMode,
    RoutingDecision,
    SampledResponse,
    TrainingExample,
    iter_jsonl,
    load_corpus,
    load_dataset,
    save_corpus,
    save_dataset,
    validate_dataset,
)


def example(qid="a", dim=8, y_sc=0.5, y_lc=0.75, k=8):
    return TrainingExample(qid, Embedding(np.arange(dim, dtype=float)), y_sc, y_lc, k)


class TestEmbedding:
    def test_values_are_read_only(self):
        e = Embedding([1.0, 2.0])
        with pytest.raises(ValueError):
            e.values[0] = 5.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Embedding([1.0, float("nan")])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Embedding([])

    def test_copy_on_construct(self):
        src = np.array([1.0, 2.0])
        e = Embedding(src)
        src[0] = 9.0
        assert e.values[0] == 1.0

    def test_equality(self):
        assert Embedding([1, 2]) == Embedding([1.0, 2.0])
        assert Embedding([1, 2]) != Embedding([1, 3])


class TestQuery:
    def test_empty_id(self):
        with pytest.raises(ValueError):
            Query("", "text", "1")

    def test_empty_text(self):
        with pytest.raises(ValueError):
            Query("x", "", "1")

    def test_hint_range(self):
        with pytest.raises(ValueError):
            Query("x", "t", "1", 1.5)

    def test_unicode_roundtrip(self, tmp_path):
        qs = [Query("u1", "Combien font 2 × 3 ? ∑ü", "6", None), Query("u2", "x", "7", 0.25)]
        save_corpus(tmp_path / "c.jsonl", qs)
        assert load_corpus(tmp_path / "c.jsonl") == qs


class TestRoundTrips:
    def test_sampled_response(self):
        r = SampledResponse(ReasoningMode.LC, "text", 12, FinishReason.LENGTH, correct=False)
        assert SampledResponse.from_dict(json.loads(json.dumps(r.to_dict()))) == r

    def test_negative_tokens(self):
        with pytest.raises(ValueError):
            SampledResponse(ReasoningMode.SC, "", -1, FinishReason.STOP)

    def test_routing_decision(self):
        d = RoutingDecision(ReasoningMode.SC, 0.25, 0.125, -0.125, 0.05)
        assert RoutingDecision.from_dict(json.loads(json.dumps(d.to_dict()))) == d

    def test_mode_serialization(self):
        assert json.dumps(ReasoningMode.SC) == '"SC"'
        assert [m.value for m in ReasoningMode] == ["SC", "LC"]

    @given(
        st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=16),
        st.integers(1, 64),
        st.data(),
    )
    def test_training_example_bit_identical(self, values, k, data):
        y_sc = data.draw(st.integers(0, k)) / k
        y_lc = data.draw(st.integers(0, k)) / k
        ex = TrainingExample("q", Embedding(values), y_sc, y_lc, k)
        back = TrainingExample.from_dict(json.loads(json.dumps(ex.to_dict())))
        assert back == ex
        assert back.embedding.values.tobytes() == ex.embedding.values.tobytes()

    def test_dataset_file_format(self, tmp_path):
        path = tmp_path / "d.jsonl"
        save_dataset(path, [example("a"), example("b")])
        raw = path.read_bytes()
        assert b"\r\n" not in raw and raw.endswith(b"\n")
        rows = list(iter_jsonl(path))
        assert set(rows[0]) == {"query_id", "embedding", "y_sc", "y_lc", "k"}
        assert load_dataset(path) == [example("a"), example("b")]

    def test_bad_jsonl_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a"}\n{oops\n')
        with pytest.raises(ValueError, match=":2:"):
            list(iter_jsonl(path))


class TestValidateDataset:
    def test_clean(self):
        assert validate_dataset([example("a"), example("b")]) == []

    def test_duplicate_id(self):
        report = validate_dataset([example("a"), example("a")])
        assert [v.kind for v in report] == ["duplicate_id"]

    def test_out_of_range(self):
        report = validate_dataset([example("a", y_sc=1.2)])
        assert [v.kind for v in report] == ["range"]

    def test_not_multiple_of_k(self):
        report = validate_dataset([example("a", y_lc=0.3)])
        assert [v.kind for v in report] == ["not_multiple_of_k"]

    def test_dimension_mismatch(self):
        report = validate_dataset([example("a", dim=8), example("b", dim=9)])
        assert [v.kind for v in report] == ["dimension"]

    def test_bad_k(self):
        report = validate_dataset([example("a", y_sc=0.0, y_lc=0.0, k=0)])
        assert "bad_k" in [v.kind for v in report]

    def test_empty(self):
        assert validate_dataset([]) == []
