import json

import numpy as np
import pytest

from cotswitch.core import FinishReason, Query, ReasoningMode, validate_dataset
from cotswitch.data.builder import build_dataset, grade_samples, pass_rate, sample_responses, sample_seed
from cotswitch.errors import ConfigurationError, PipelineError, TransportError
from cotswitch.llm.mock import mock_backend, planted_corpus, planted_rates


class FlakyBackend:
    """Wraps a backend; raises ``exc`` for chosen query ids (optionally only the first n calls)."""

    def __init__(self, inner, fail_ids, exc=TransportError("down"), times=None):
        self.inner = inner
        self.fail_ids = set(fail_ids)
        self.exc = exc
        self.times = times
        self.fingerprint = inner.fingerprint

    def complete(self, prompt, params, seed=None):
        if prompt.query_id in self.fail_ids and (self.times is None or self.times > 0):
            if self.times is not None:
                self.times -= 1
            raise self.exc
        return self.inner.complete(prompt, params, seed)

    def embed(self, text):
        return self.inner.embed(text)


class TestPassRate:
    def test_examples(self):
        assert pass_rate([True] * 6 + [False] * 2) == 0.75
        assert pass_rate([True] * 16) == 1.0
        assert pass_rate([False] * 5) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            pass_rate([])


class TestSampleResponses:
    def test_cardinality(self, corpus, backend):
        out = sample_responses(corpus[0], ReasoningMode.SC, 8, backend)
        assert len(out) == 8 and all(r.mode is ReasoningMode.SC for r in out)
        assert all(r.correct is None for r in out)

    def test_k_one(self, corpus, backend):
        assert len(sample_responses(corpus[0], ReasoningMode.LC, 1, backend)) == 1

    def test_k_zero(self, corpus, backend):
        with pytest.raises(ValueError):
            sample_responses(corpus[0], ReasoningMode.SC, 0, backend)

    def test_seeds_distinct_and_stable(self):
        seeds = {sample_seed(0, "q1", i) for i in range(100)}
        assert len(seeds) == 100
        assert sample_seed(0, "q1", 3) == sample_seed(0, "q1", 3)
        assert all(0 <= s < 2**31 for s in seeds)

    def test_transport_failure_recorded_as_error(self, corpus, backend):
        flaky = FlakyBackend(backend, {corpus[0].id}, times=3)
        out = sample_responses(corpus[0], ReasoningMode.SC, 8, flaky)
        assert len(out) == 8
        assert sum(r.finish_reason is FinishReason.ERROR for r in out) == 3
        graded = grade_samples(out, corpus[0].gold_answer)
        assert all(g.correct is False for g in graded if g.finish_reason is FinishReason.ERROR)

    def test_backend_permanently_down(self, corpus, backend):
        with pytest.raises(PipelineError) as info:
            sample_responses(corpus[4], ReasoningMode.SC, 4, FlakyBackend(backend, {corpus[4].id}))
        assert info.value.query_id == corpus[4].id

    def test_rejected_request(self, corpus, backend):
        flaky = FlakyBackend(backend, {corpus[1].id}, exc=ConfigurationError("HTTP 400"))
        with pytest.raises(PipelineError):
            sample_responses(corpus[1], ReasoningMode.LC, 4, flaky)


class TestBuildDataset:
    def test_hundred_queries(self):
        corpus = planted_corpus(100, seed=5)
        data, report = build_dataset(corpus, 8, mock_backend(corpus, 0))
        assert [d.query_id for d in data] == [q.id for q in corpus]
        assert validate_dataset(data) == []
        assert all((d.y_sc * 8).is_integer() and (d.y_lc * 8).is_integer() for d in data)
        assert len(report.records) == 100 and report.k == 8

    def test_trivial_query_all_correct(self):
        corpus = [Query("zero", "trivial one", "1", 0.0), Query("half", "other", "2", 0.5)]
        data, _ = build_dataset(corpus, 16, mock_backend(corpus, 0))
        assert data[0].y_sc == 1.0 and data[0].y_lc == 1.0

    def test_tokens_scale_with_k(self):
        corpus = planted_corpus(30, seed=2)
        _, r1 = build_dataset(corpus, 1, mock_backend(corpus, 0))
        _, r16 = build_dataset(corpus, 16, mock_backend(corpus, 0))
        total1 = sum(r1.tokens.values())
        total16 = sum(r16.tokens.values())
        assert total16 / total1 == pytest.approx(16, rel=0.03)

    def test_deterministic(self):
        corpus = planted_corpus(40, seed=2)
        a, _ = build_dataset(corpus, 4, mock_backend(corpus, 0), seed=9)
        b, _ = build_dataset(corpus, 4, mock_backend(corpus, 0), seed=9)
        c, _ = build_dataset(corpus, 4, mock_backend(corpus, 0), seed=10)
        assert a == b and a != c

    def test_concurrency_preserves_order_and_values(self):
        corpus = planted_corpus(60, seed=2)
        serial, _ = build_dataset(corpus, 4, mock_backend(corpus, 0))
        parallel, _ = build_dataset(corpus, 4, mock_backend(corpus, 0), concurrency=4)
        assert serial == parallel

    def test_resume_after_crash(self, tmp_path):
        corpus = planted_corpus(120, seed=4)
        clean, _ = build_dataset(corpus, 8, mock_backend(corpus, 0))
        ckpt = tmp_path / "progress.jsonl"
        crashing = FlakyBackend(mock_backend(corpus, 0), {corpus[50].id}, exc=RuntimeError("killed"))
        with pytest.raises(PipelineError) as info:
            build_dataset(corpus, 8, crashing, checkpoint_path=ckpt)
        assert info.value.query_id == corpus[50].id
        lines = ckpt.read_text().splitlines()
        assert len(lines) == 1 + 50  # header + two full chunks
        resumed, report = build_dataset(corpus, 8, mock_backend(corpus, 0), checkpoint_path=ckpt)
        assert report.resumed_from == 50
        assert resumed == clean
        assert not ckpt.exists()

    def test_torn_checkpoint_line_is_ignored(self, tmp_path):
        corpus = planted_corpus(60, seed=4)
        clean, _ = build_dataset(corpus, 2, mock_backend(corpus, 0))
        ckpt = tmp_path / "p.jsonl"
        with pytest.raises(PipelineError):
            build_dataset(corpus, 2, FlakyBackend(mock_backend(corpus, 0), {corpus[30].id}, exc=RuntimeError("x")), checkpoint_path=ckpt)
        with open(ckpt, "a") as fh:
            fh.write('{"example": {"query_id"')
        resumed, _ = build_dataset(corpus, 2, mock_backend(corpus, 0), checkpoint_path=ckpt)
        assert resumed == clean

    def test_checkpoint_from_other_config_rejected(self, tmp_path):
        corpus = planted_corpus(60, seed=4)
        ckpt = tmp_path / "p.jsonl"
        with pytest.raises(PipelineError):
            build_dataset(corpus, 2, FlakyBackend(mock_backend(corpus, 0), {corpus[30].id}, exc=RuntimeError("x")), checkpoint_path=ckpt)
        with pytest.raises(PipelineError, match="different run"):
            build_dataset(corpus, 4, mock_backend(corpus, 0), checkpoint_path=ckpt)

    def test_report_json(self, corpus, backend):
        _, report = build_dataset(corpus[:5], 2, backend)
        d = json.loads(json.dumps(report.to_dict()))
        assert set(d["tokens"]) == {"SC", "LC"} and d["sampling"]["temperature"] == 0.7
        assert d["failures"] == {"SC": 0, "LC": 0}

    def test_validation(self, corpus, backend):
        with pytest.raises(ValueError):
            build_dataset([], 8, backend)
        with pytest.raises(ValueError):
            build_dataset(corpus, 0, backend)
        with pytest.raises(ValueError):
            build_dataset([corpus[0], corpus[0]], 2, backend)

    def test_label_error_shrinks_with_k(self):
        corpus = planted_corpus(400, seed=8)
        truth = np.array([planted_rates(q.difficulty_hint) for q in corpus])
        maes = []
        for k in (1, 2, 4, 8, 16):
            data, _ = build_dataset(corpus, k, mock_backend(corpus, 0))
            est = np.array([[d.y_sc, d.y_lc] for d in data])
            maes.append(float(np.abs(est - truth).mean()))
        assert all(a > b for a, b in zip(maes, maes[1:])), maes
