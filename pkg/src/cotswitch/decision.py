"""Routing rule and baseline policies.

The switcher routes to long CoT when its predicted advantage
``y_hat_lc - y_hat_sc`` reaches the threshold ``tau``. Baselines always pick
one mode, or pick LC with a fixed probability.

Policy strings::

    switcher:tau=0.05   sc-only   lc-only   random:p_lc=0.75,seed=7
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .core import Query, ReasoningMode, RoutingDecision
from .errors import ConfigurationError, NumericError
from .llm.mock import stable_hash
from .switcher.net import SwitcherModel

# per-backbone thresholds used for the reported main results
DEFAULT_TAU = {"1.5B": 0.04, "7B": 0.05, "14B": 0.03}

KINDS = ("switcher", "sc_only", "lc_only", "random")
GRAMMAR = 'expected "switcher:tau=<float>", "sc-only", "lc-only" or "random:p_lc=<float>,seed=<int>"'


@dataclass(frozen=True)
class Policy:
    kind: str
    tau: float = 0.05
    p_lc: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}; {GRAMMAR}")
        if self.kind == "random" and not 0.0 <= self.p_lc <= 1.0:
            raise ConfigurationError("random policy needs p_lc in [0, 1]")
        if self.kind == "switcher" and not math.isfinite(self.tau):
            raise ConfigurationError("switcher tau must be finite")

    @classmethod
    def switcher(cls, tau: float) -> "Policy":
        return cls("switcher", tau=float(tau))

    @classmethod
    def random(cls, p_lc: float, seed: int = 0) -> "Policy":
        return cls("random", p_lc=float(p_lc), seed=int(seed))

    def describe(self) -> str:
        if self.kind == "switcher":
            return f"switcher:tau={self.tau!r}"
        if self.kind == "random":
            return f"random:p_lc={self.p_lc!r},seed={self.seed}"
        return self.kind.replace("_", "-")


SC_ONLY = Policy("sc_only")
LC_ONLY = Policy("lc_only")


def _kv(body: str) -> dict[str, str]:
    out = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in part:
            raise ConfigurationError(f"bad policy option {part!r}; {GRAMMAR}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_policy(spec: str) -> Policy:
    spec = spec.strip()
    head, _, body = spec.partition(":")
    head = head.strip().lower().replace("_", "-")
    try:
        if head in ("sc-only", "lc-only") and not body:
            return SC_ONLY if head == "sc-only" else LC_ONLY
        opts = _kv(body)
        if head == "switcher" and set(opts) <= {"tau"}:
            return Policy.switcher(float(opts.get("tau", 0.05)))
        if head == "random" and set(opts) <= {"p_lc", "seed"} and "p_lc" in opts:
            return Policy.random(float(opts["p_lc"]), int(opts.get("seed", 0)))
    except (ValueError, ConfigurationError) as exc:
        raise ConfigurationError(f"bad policy {spec!r}: {exc}; {GRAMMAR}") from exc
    raise ConfigurationError(f"unknown policy {spec!r}; {GRAMMAR}")


def parse_policies(spec: str) -> list[Policy]:
    """Split a comma-separated list; ``key=value`` pieces stay with their policy."""
    groups: list[str] = []
    for piece in (p.strip() for p in spec.split(",")):
        if not piece:
            continue
        if "=" in piece and ":" not in piece and groups:
            groups[-1] += "," + piece
        else:
            groups.append(piece)
    if not groups:
        raise ConfigurationError(f"empty policy list; {GRAMMAR}")
    return [parse_policy(g) for g in groups]


def decide(y_hat_sc: float, y_hat_lc: float, tau: float) -> RoutingDecision:
    if not all(math.isfinite(v) for v in (y_hat_sc, y_hat_lc, tau)):
        raise NumericError("decide() needs finite predictions and threshold")
    margin = y_hat_lc - y_hat_sc
    mode = ReasoningMode.LC if margin >= tau else ReasoningMode.SC
    return RoutingDecision(mode, float(y_hat_sc), float(y_hat_lc), float(margin), float(tau))


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def random_uniform(seed: int, query_id: str) -> float:
    """Per-query uniform draw in [0, 1); independent of evaluation order."""
    return (splitmix64(seed ^ stable_hash(query_id)) >> 11) / float(1 << 53)


def predict_one(model: SwitcherModel, embedding: Any) -> tuple[float, float]:
    values = getattr(embedding, "values", embedding)
    raw = model.predict(np.asarray(values)[None, :])[0]
    sc, lc = np.clip(raw, 0.0, 1.0)
    return float(sc), float(lc)


def apply_policy(
    policy: Policy,
    query: Query,
    model: Optional[SwitcherModel] = None,
    embedder: Any = None,
    predictions: Optional[tuple[float, float]] = None,
) -> RoutingDecision:
    """Route one query. ``predictions`` short-circuits embed + forward."""
    if policy.kind == "sc_only":
        return RoutingDecision(ReasoningMode.SC)
    if policy.kind == "lc_only":
        return RoutingDecision(ReasoningMode.LC)
    if policy.kind == "random":
        u = random_uniform(policy.seed, query.id)
        return RoutingDecision(ReasoningMode.LC if u < policy.p_lc else ReasoningMode.SC)
    if predictions is None:
        if model is None or embedder is None:
            raise ConfigurationError("switcher policy requires a loaded model and an embedder")
        predictions = predict_one(model, embedder.embed(query.text))
    return decide(predictions[0], predictions[1], policy.tau)

