"""Pass-rate labeled dataset construction.

For each query: render the SC and LC prompts, draw ``k`` samples per mode,
grade each, and label the query with the two empirical pass rates. The
query embedding comes from the configured embedder (by default the backend).
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from ..core import FinishReason, Query, ReasoningMode, SampledResponse, TrainingExample
from ..errors import ConfigurationError, PipelineError, TransportError
from ..llm.client import SamplingConfig, SamplingParams
from ..llm.mock import stable_hash
from .grading import Grader, grade_response
from .prompts import DEFAULT_TEMPLATES, PromptTemplate, render_prompt

logger = logging.getLogger(__name__)

DEFAULT_K = 8
CHECKPOINT_EVERY = 25
CHECKPOINT_VERSION = 1


def sample_seed(base_seed: int, query_id: str, index: int) -> int:
    # 31-bit so it fits the int32 seed field many servers expect
    return stable_hash("sample", base_seed, query_id, index) & 0x7FFFFFFF


def pass_rate(grades: Sequence[bool]) -> float:
    if len(grades) == 0:
        raise ValueError("pass_rate needs at least one grade")
    return sum(1 for g in grades if g) / len(grades)


def sample_responses(
    query: Query,
    mode: ReasoningMode,
    k: int,
    backend: Any,
    params: Optional[SamplingParams] = None,
    seed: int = 0,
    templates: dict[ReasoningMode, PromptTemplate] = DEFAULT_TEMPLATES,
) -> list[SampledResponse]:
    """Draw exactly ``k`` responses; failed generations are kept as errors.

    A failure that survived the client's retries is recorded with
    ``finish_reason=error`` and ``correct=False`` so the pass-rate
    denominator stays ``k``. If every sample fails, or the backend rejects
    the request outright, a ``PipelineError`` naming the query is raised.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    params = params or SamplingConfig().params_for(mode)
    prompt = render_prompt(query, mode, templates)
    out: list[SampledResponse] = []
    failures = 0
    for i in range(k):
        try:
            res = backend.complete(prompt, params, seed=sample_seed(seed, query.id, i))
        except TransportError as exc:
            failures += 1
            logger.warning("query %s mode %s sample %d failed: %s", query.id, mode, i, exc)
            out.append(SampledResponse(mode, "", 0, FinishReason.ERROR, correct=False))
            continue
        except ConfigurationError as exc:
            raise PipelineError(f"backend rejected query {query.id}: {exc}", query.id) from exc
        out.append(SampledResponse(mode, res.text, res.completion_tokens, res.finish_reason))
    if failures == k:
        raise PipelineError(f"all {k} {mode} samples failed for query {query.id}", query.id)
    return out


def grade_samples(responses: Sequence[SampledResponse], gold: str, grader: Grader = grade_response) -> list[SampledResponse]:
    graded = []
    for r in responses:
        if r.finish_reason is FinishReason.ERROR:
            ok = False
        else:
            ok = grader(r.text, gold).correct
        graded.append(SampledResponse(r.mode, r.text, r.token_count, r.finish_reason, ok))
    return graded


@dataclass
class QueryRecord:
    query_id: str
    y_sc: float
    y_lc: float
    tokens_sc: int
    tokens_lc: int
    failures_sc: int
    failures_lc: int


@dataclass
class BuildReport:
    k: int
    seed: int
    n_queries: int
    sampling: dict[str, Any]
    backend: str
    embedder: str
    records: list[QueryRecord] = field(default_factory=list)
    resumed_from: int = 0

    @property
    def tokens(self) -> dict[str, int]:
        return {
            "SC": sum(r.tokens_sc for r in self.records),
            "LC": sum(r.tokens_lc for r in self.records),
        }

    @property
    def failures(self) -> dict[str, int]:
        return {
            "SC": sum(r.failures_sc for r in self.records),
            "LC": sum(r.failures_lc for r in self.records),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "seed": self.seed,
            "n_queries": self.n_queries,
            "sampling": self.sampling,
            "backend": self.backend,
            "embedder": self.embedder,
            "tokens": self.tokens,
            "failures": self.failures,
            "resumed_from": self.resumed_from,
            "records": [asdict(r) for r in self.records],
        }


def _fingerprint(obj: Any) -> str:
    return getattr(obj, "fingerprint", type(obj).__name__)


def _label_query(
    query: Query,
    k: int,
    backend: Any,
    embedder: Any,
    sampling: SamplingConfig,
    seed: int,
    grader: Grader,
    templates: dict[ReasoningMode, PromptTemplate],
) -> tuple[TrainingExample, QueryRecord]:
    rates, tokens, fails = {}, {}, {}
    for mode in (ReasoningMode.SC, ReasoningMode.LC):
        raw = sample_responses(query, mode, k, backend, sampling.params_for(mode), seed, templates)
        graded = grade_samples(raw, query.gold_answer, grader)
        rates[mode] = pass_rate([bool(r.correct) for r in graded])
        tokens[mode] = sum(r.token_count for r in graded)
        fails[mode] = sum(r.finish_reason is FinishReason.ERROR for r in graded)
    try:
        emb = embedder.embed(query.text)
    except TransportError as exc:
        raise PipelineError(f"embedding failed for query {query.id}: {exc}", query.id) from exc
    example = TrainingExample(query.id, emb, rates[ReasoningMode.SC], rates[ReasoningMode.LC], k)
    record = QueryRecord(
        query.id,
        example.y_sc,
        example.y_lc,
        tokens[ReasoningMode.SC],
        tokens[ReasoningMode.LC],
        fails[ReasoningMode.SC],
        fails[ReasoningMode.LC],
    )
    return example, record


# -- progress checkpoint ----------------------------------------------------


def _checkpoint_header(k: int, seed: int, corpus: Sequence[Query], sampling: SamplingConfig) -> dict[str, Any]:
    return {
        "version": CHECKPOINT_VERSION,
        "k": k,
        "seed": seed,
        "n_queries": len(corpus),
        "corpus_hash": stable_hash(*(q.id for q in corpus)),
        "sampling": sampling.to_dict(),
    }


def _load_progress(path: Path, header: dict[str, Any]) -> list[tuple[TrainingExample, QueryRecord]]:
    if not path.exists():
        return []
    done = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        return []
    stored = json.loads(lines[0]).get("header")
    if stored != header:
        raise PipelineError(f"checkpoint {path} was written for a different run configuration")
    for ln in lines[1:]:
        try:
            row = json.loads(ln)
        except json.JSONDecodeError:
            logger.warning("ignoring torn trailing line in %s", path)
            break
        done.append((TrainingExample.from_dict(row["example"]), QueryRecord(**row["record"])))
    return done


def _append_progress(path: Path, header: dict[str, Any], items: Sequence[tuple[TrainingExample, QueryRecord]]) -> None:
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        if fresh:
            fh.write(json.dumps({"header": header}) + "\n")
        for ex, rec in items:
            fh.write(json.dumps({"example": ex.to_dict(), "record": asdict(rec)}) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def build_dataset(
    corpus: Sequence[Query],
    k: int,
    backend: Any,
    embedder: Any = None,
    *,
    sampling: SamplingConfig = SamplingConfig(),
    seed: int = 0,
    grader: Grader = grade_response,
    templates: dict[ReasoningMode, PromptTemplate] = DEFAULT_TEMPLATES,
    checkpoint_path: str | Path | None = None,
    checkpoint_every: int = CHECKPOINT_EVERY,
    concurrency: int = 1,
) -> tuple[list[TrainingExample], BuildReport]:
    """Label every query with ``(embedding, y_sc, y_lc)``, preserving order.

    With ``checkpoint_path`` set, progress is appended every
    ``checkpoint_every`` queries and a rerun resumes after the last
    completed query. The file is removed once the build finishes.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    embedder = embedder if embedder is not None else backend
    ids = [q.id for q in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus query ids must be unique")

    header = _checkpoint_header(k, seed, corpus, sampling)
    ckpt = Path(checkpoint_path) if checkpoint_path else None
    done = _load_progress(ckpt, header) if ckpt else []
    for (ex, _), q in zip(done, corpus):
        if ex.query_id != q.id:
            raise PipelineError(f"checkpoint {ckpt} does not match corpus order", ex.query_id)

    report = BuildReport(
        k=k,
        seed=seed,
        n_queries=len(corpus),
        sampling=sampling.to_dict(),
        backend=_fingerprint(backend),
        embedder=_fingerprint(embedder),
        resumed_from=len(done),
    )
    examples = [ex for ex, _ in done]
    report.records.extend(rec for _, rec in done)
    if done:
        logger.info("resuming after %d completed queries", len(done))

    def label(q: Query) -> tuple[TrainingExample, QueryRecord]:
        return _label_query(q, k, backend, embedder, sampling, seed, grader, templates)

    pool = ThreadPoolExecutor(max_workers=concurrency) if concurrency > 1 else None
    try:
        for start in range(len(done), len(corpus), checkpoint_every):
            chunk = corpus[start : start + checkpoint_every]
            finished: list[tuple[TrainingExample, QueryRecord]] = []
            results = pool.map(label, chunk) if pool else map(label, chunk)
            try:
                for item in results:
                    finished.append(item)
            except PipelineError:
                if ckpt and finished:
                    _append_progress(ckpt, header, finished)
                raise
            except Exception as exc:
                if ckpt and finished:
                    _append_progress(ckpt, header, finished)
                failing = chunk[len(finished)].id
                raise PipelineError(f"dataset build aborted at query {failing}: {exc}", failing) from exc
            if ckpt:
                _append_progress(ckpt, header, finished)
            examples.extend(ex for ex, _ in finished)
            report.records.extend(rec for _, rec in finished)
    finally:
        if pool:
            pool.shutdown(wait=True)

    if ckpt and ckpt.exists():
        ckpt.unlink()
    return examples, report
