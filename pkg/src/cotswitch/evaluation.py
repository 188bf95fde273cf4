"""Accuracy/cost evaluation, threshold sweeps and area-under-curve metrics.

The trade-off curve plots accuracy against average completion tokens, one
point per threshold. ``auc_ac`` integrates it between the SC-only and
LC-only token costs; ``auc_ac_lb`` is the area under the straight chord
between those two baselines (what fixed-probability mixing achieves), and
``nauc_ac`` is the difference, in token x accuracy units.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .core import FinishReason, Query, ReasoningMode
from .data.builder import sample_seed
from .data.grading import Grader, grade_response
from .data.prompts import DEFAULT_TEMPLATES, PromptTemplate, render_prompt
from .decision import LC_ONLY, SC_ONLY, Policy, apply_policy, predict_one
from .errors import CotSwitchError, DomainError
from .llm.client import SamplingConfig
from .llm.mock import stable_hash
from .switcher.net import SwitcherModel

logger = logging.getLogger(__name__)

DEFAULT_TAU_GRID = tuple(round(-1.0 + 0.02 * i, 10) for i in range(101)) + (-1.01, 1.01)


@dataclass(frozen=True)
class QueryOutcome:
    accuracy: float  # fraction of the n samples graded correct
    tokens: float  # mean completion tokens over the n samples
    errors: int


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    mode: ReasoningMode
    correct: float
    tokens: float
    errors: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "mode": self.mode.value,
            "correct": self.correct,
            "tokens": self.tokens,
            "errors": self.errors,
        }


@dataclass
class EvalResult:
    policy: str
    accuracy: float
    avg_tokens: float
    n_queries: int
    seed: int
    n_samples: int
    backend: str
    records: list[QueryRecord] = field(default_factory=list)
    partial: bool = False

    @property
    def lc_fraction(self) -> float:
        return sum(r.mode is ReasoningMode.LC for r in self.records) / max(len(self.records), 1)

    def modes(self) -> list[ReasoningMode]:
        return [r.mode for r in self.records]

    def to_dict(self, with_records: bool = False) -> dict[str, Any]:
        d = {
            "policy": self.policy,
            "accuracy": self.accuracy,
            "avg_tokens": self.avg_tokens,
            "n_queries": self.n_queries,
            "n_samples_per_query": self.n_samples,
            "lc_fraction": self.lc_fraction,
            "seed": self.seed,
            "backend": self.backend,
            "partial": self.partial,
        }
        if with_records:
            d["records"] = [r.to_dict() for r in self.records]
        return d


class EvalCache:
    """Memoizes per-(query, mode) outcomes and switcher predictions.

    Outcomes are deterministic in ``(query, mode, seed, n_samples)``, so a
    threshold sweep can reuse them across every grid point.
    """

    def __init__(self):
        self.outcomes: dict[tuple[str, ReasoningMode, int, int], QueryOutcome] = {}
        self.predictions: dict[str, tuple[float, float]] = {}


def _run_query(
    query: Query,
    mode: ReasoningMode,
    backend: Any,
    n: int,
    seed: int,
    sampling: SamplingConfig,
    grader: Grader,
    templates: dict[ReasoningMode, PromptTemplate],
) -> QueryOutcome:
    prompt = render_prompt(query, mode, templates)
    params = sampling.params_for(mode)
    correct, tokens, errors = 0, 0, 0
    eval_seed = stable_hash("eval", seed)
    for i in range(n):
        try:
            res = backend.complete(prompt, params, seed=sample_seed(eval_seed, query.id, i))
        except CotSwitchError as exc:
            errors += 1
            logger.warning("evaluation sample failed for %s (%s): %s", query.id, mode, exc)
            continue
        tokens += res.completion_tokens
        if res.finish_reason is not FinishReason.ERROR and grader(res.text, query.gold_answer).correct:
            correct += 1
    return QueryOutcome(correct / n, tokens / n, errors)


def evaluate(
    policy: Policy,
    corpus: Sequence[Query],
    backend: Any,
    model: Optional[SwitcherModel] = None,
    embedder: Any = None,
    n_samples_per_query: int = 1,
    seed: int = 0,
    *,
    sampling: SamplingConfig = SamplingConfig(),
    grader: Grader = grade_response,
    templates: dict[ReasoningMode, PromptTemplate] = DEFAULT_TEMPLATES,
    cache: Optional[EvalCache] = None,
) -> EvalResult:
    """Route every query with ``policy`` and score the chosen mode's samples.

    Accuracy is averaged over samples within a query, then over queries.
    Sample seeds depend only on ``(seed, query id, sample index)``, so two
    policies that pick the same mode for a query see identical outcomes.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    if n_samples_per_query < 1:
        raise ValueError("n_samples_per_query must be >= 1")
    embedder = embedder if embedder is not None else backend
    cache = cache if cache is not None else EvalCache()
    records: list[QueryRecord] = []
    for q in corpus:
        preds = None
        if policy.kind == "switcher":
            preds = cache.predictions.get(q.id)
            if preds is None:
                if model is None:
                    raise ValueError("switcher policy requires a model")
                preds = predict_one(model, embedder.embed(q.text))
                cache.predictions[q.id] = preds
        decision = apply_policy(policy, q, model, embedder, predictions=preds)
        key = (q.id, decision.mode, seed, n_samples_per_query)
        outcome = cache.outcomes.get(key)
        if outcome is None:
            outcome = _run_query(q, decision.mode, backend, n_samples_per_query, seed, sampling, grader, templates)
            cache.outcomes[key] = outcome
        records.append(QueryRecord(q.id, decision.mode, outcome.accuracy, outcome.tokens, outcome.errors))
    return EvalResult(
        policy=policy.describe(),
        accuracy=float(np.mean([r.correct for r in records])),
        avg_tokens=float(np.mean([r.tokens for r in records])),
        n_queries=len(records),
        seed=seed,
        n_samples=n_samples_per_query,
        backend=getattr(backend, "fingerprint", type(backend).__name__),
        records=records,
        partial=any(r.errors for r in records),
    )


# ---------------------------------------------------------------------------
# Trade-off curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    tau: float
    avg_tokens: float
    accuracy: float


@dataclass
class TradeoffCurve:
    points: list[CurvePoint]
    sc_endpoint: tuple[float, float]  # (T_SC, A_SC)
    lc_endpoint: tuple[float, float]  # (T_LC, A_LC)
    sweep: list[EvalResult] = field(default_factory=list, repr=False)

    @classmethod
    def build(
        cls,
        points: Iterable[CurvePoint],
        sc_endpoint: tuple[float, float],
        lc_endpoint: tuple[float, float],
        sweep: Optional[list[EvalResult]] = None,
    ) -> "TradeoffCurve":
        """Sort by token cost; equal-cost points keep the highest accuracy."""
        best: dict[float, CurvePoint] = {}
        for p in points:
            cur = best.get(p.avg_tokens)
            if cur is None or p.accuracy > cur.accuracy:
                best[p.avg_tokens] = p
        ordered = sorted(best.values(), key=lambda p: p.avg_tokens)
        return cls(ordered, tuple(map(float, sc_endpoint)), tuple(map(float, lc_endpoint)), sweep or [])

    @property
    def t_sc(self) -> float:
        return self.sc_endpoint[0]

    @property
    def t_lc(self) -> float:
        return self.lc_endpoint[0]


def sweep_tau(
    model: SwitcherModel,
    corpus: Sequence[Query],
    backend: Any,
    tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
    embedder: Any = None,
    n_samples_per_query: int = 1,
    seed: int = 0,
    **eval_kwargs: Any,
) -> TradeoffCurve:
    grid = sorted(set(float(t) for t in tau_grid))
    if not grid:
        raise ValueError("tau grid must be nonempty")
    cache = EvalCache()
    common = dict(n_samples_per_query=n_samples_per_query, seed=seed, cache=cache, **eval_kwargs)
    sc = evaluate(SC_ONLY, corpus, backend, **common)
    lc = evaluate(LC_ONLY, corpus, backend, **common)
    runs = [evaluate(Policy.switcher(t), corpus, backend, model, embedder, **common) for t in grid]
    points = [CurvePoint(t, r.avg_tokens, r.accuracy) for t, r in zip(grid, runs)]
    return TradeoffCurve.build(points, (sc.avg_tokens, sc.accuracy), (lc.avg_tokens, lc.accuracy), runs)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def auc_ac(curve: TradeoffCurve) -> float:
    """Trapezoidal area under accuracy(tokens) over ``[T_SC, T_LC]``.

    Outside the span of the swept points the curve is held at its first
    (or last) accuracy.
    """
    lo, hi = curve.t_sc, curve.t_lc
    if not hi > lo:
        raise DomainError(f"need T_LC > T_SC, got T_SC={lo}, T_LC={hi}")
    if not curve.points:
        raise DomainError("curve has no points")
    xs = np.array([p.avg_tokens for p in curve.points], dtype=np.float64)
    ys = np.array([p.accuracy for p in curve.points], dtype=np.float64)
    inner = xs[(xs > lo) & (xs < hi)]
    knots = np.concatenate([[lo], inner, [hi]])
    vals = np.interp(knots, xs, ys)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots)))


def auc_ac_lb(a_sc: float, a_lc: float, t_sc: float, t_lc: float) -> float:
    if not t_lc > t_sc:
        raise DomainError(f"need t_lc > t_sc, got t_sc={t_sc}, t_lc={t_lc}")
    return (a_sc + a_lc) / 2.0 * (t_lc - t_sc)


def nauc_ac(auc_ts: float, auc_lb: float) -> float:
    return auc_ts - auc_lb


@dataclass(frozen=True)
class AucReport:
    auc_ac: float
    auc_ac_lb: float
    nauc_ac: float

    def to_dict(self) -> dict[str, float]:
        return {"auc_ac": self.auc_ac, "auc_ac_lb": self.auc_ac_lb, "nauc_ac": self.nauc_ac}


def curve_metrics(curve: TradeoffCurve) -> AucReport:
    area = auc_ac(curve)
    lb = auc_ac_lb(curve.sc_endpoint[1], curve.lc_endpoint[1], curve.t_sc, curve.t_lc)
    return AucReport(area, lb, nauc_ac(area, lb))


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

CSV_HEADER = ("tau", "avg_tokens", "accuracy")


def export_curve(curve: TradeoffCurve, path: str | Path) -> None:
    if not curve.points:
        raise ValueError("refusing to export an empty curve")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for p in curve.points:
            w.writerow([repr(p.tau), repr(p.avg_tokens), repr(p.accuracy)])
        w.writerow(["sc_only", repr(curve.sc_endpoint[0]), repr(curve.sc_endpoint[1])])
        w.writerow(["lc_only", repr(curve.lc_endpoint[0]), repr(curve.lc_endpoint[1])])


def read_curve(path: str | Path) -> TradeoffCurve:
    points, sc, lc = [], None, None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for tag, t, a in rows:
            if tag == "sc_only":
                sc = (float(t), float(a))
            elif tag == "lc_only":
                lc = (float(t), float(a))
            else:
                points.append(CurvePoint(float(tag), float(t), float(a)))
    if sc is None or lc is None:
        raise ValueError(f"{path}: missing sc_only/lc_only endpoint rows")
    return TradeoffCurve(points, sc, lc)

