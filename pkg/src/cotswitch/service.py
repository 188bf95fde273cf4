"""HTTP routing gateway: embed, switch, render the chosen template, generate.

``RouterService`` holds the logic and is usable in-process; ``create_app``
wraps it in a FastAPI application with these endpoints::

    POST /v1/route        {"query": str, "tau": float?, "mode": "SC"|"LC"?}
    GET  /healthz
    GET  /v1/config
    PUT  /v1/config/tau   {"tau": float}
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .core import Query, ReasoningMode, RoutingDecision
from .data.prompts import DEFAULT_TEMPLATES, PromptTemplate, render_prompt
from .decision import decide, predict_one
from .errors import ConfigurationError, CotSwitchError
from .llm.client import SamplingConfig
from .switcher.net import SwitcherModel

logger = logging.getLogger(__name__)
decision_log = logging.getLogger("cotswitch.decisions")

DEFAULT_MAX_IN_FLIGHT = 64
DEFAULT_BIND = "127.0.0.1:8080"

# env var -> settings field
ENV_VARS = {
    "COTSWITCH_BIND": "bind",
    "COTSWITCH_BACKEND_URL": "backend_url",
    "COTSWITCH_API_KEY": "api_key",
    "COTSWITCH_CHECKPOINT": "checkpoint",
    "COTSWITCH_TAU": "tau",
    "COTSWITCH_MODEL_NAME": "model_name",
}


@dataclass(frozen=True)
class ServiceSettings:
    bind: str = DEFAULT_BIND
    backend_url: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    checkpoint: Optional[str] = None
    tau: float = 0.05
    model_name: str = "default"
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT

    @classmethod
    def resolve(
        cls,
        file_values: Optional[Mapping[str, Any]] = None,
        env: Optional[Mapping[str, str]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "ServiceSettings":
        """Merge config-file values, then env vars, then explicit overrides."""
        env = os.environ if env is None else env
        merged: dict[str, Any] = {}
        known = set(cls.__dataclass_fields__)
        for k, v in (file_values or {}).items():
            if k in known:
                merged[k] = v
        for var, key in ENV_VARS.items():
            if env.get(var):
                merged[key] = env[var]
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            merged["tau"] = float(merged.get("tau", 0.05))
            merged["max_in_flight"] = int(merged.get("max_in_flight", DEFAULT_MAX_IN_FLIGHT))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad service setting: {exc}") from exc
        if not math.isfinite(merged["tau"]):
            raise ConfigurationError("tau must be finite")
        if merged["max_in_flight"] < 1:
            raise ConfigurationError("max_in_flight must be positive")
        return cls(**merged)

    def host_port(self) -> tuple[str, int]:
        host, sep, port = self.bind.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigurationError(f"bind address must look like host:port, got {self.bind!r}")
        return host or "127.0.0.1", int(port)


@dataclass(frozen=True)
class RouteRequest:
    query_text: str
    tau_override: Optional[float] = None
    mode_override: Optional[ReasoningMode] = None
    request_id: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.query_text, str) or not self.query_text.strip():
            raise ValueError("query must be a nonempty string")
        if self.tau_override is not None and self.mode_override is not None:
            raise ValueError("set at most one of tau and mode")
        if self.tau_override is not None and not math.isfinite(self.tau_override):
            raise ValueError("tau must be finite")

    @classmethod
    def from_json(cls, body: Any) -> "RouteRequest":
        if not isinstance(body, dict):
            raise ValueError("request body must be a JSON object")
        unknown = set(body) - {"query", "tau", "mode", "request_id"}
        if unknown:
            raise ValueError(f"unknown fields: {sorted(unknown)}")
        tau = body.get("tau")
        if tau is not None and (isinstance(tau, bool) or not isinstance(tau, (int, float))):
            raise ValueError("tau must be a number")
        mode = body.get("mode")
        if mode is not None:
            try:
                mode = ReasoningMode(str(mode).upper())
            except ValueError:
                raise ValueError('mode must be "SC" or "LC"') from None
        rid = body.get("request_id")
        return cls(
            query_text=body.get("query"),
            tau_override=None if tau is None else float(tau),
            mode_override=mode,
            request_id=None if rid is None else str(rid),
        )


@dataclass(frozen=True)
class RouteResponse:
    request_id: str
    decision: RoutingDecision
    answer_text: str
    completion_tokens: int
    latency: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return {
            "request_id": self.request_id,
            "decision": self.decision.to_dict(),
            "answer_text": self.answer_text,
            "completion_tokens": self.completion_tokens,
            "latency": dict(self.latency),
        }


class RouteFailure(CotSwitchError):
    """A request that could not be served; ``status`` is the HTTP code."""

    def __init__(
        self,
        status: int,
        message: str,
        request_id: Optional[str] = None,
        decision: Optional[RoutingDecision] = None,
        latency: Optional[dict[str, float]] = None,
    ):
        super().__init__(message)
        self.status = status
        self.message = message
        self.request_id = request_id
        self.decision = decision
        self.latency = latency or {}

    def to_dict(self) -> dict[str, Any]:
        return {
            "error": self.message,
            "request_id": self.request_id,
            "decision": None if self.decision is None else self.decision.to_dict(),
            "latency": dict(self.latency),
        }


def _ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


class RouterService:
    """Routing logic shared by the HTTP app and in-process callers.

    The model is fixed once loaded; ``tau`` is the only mutable setting and
    is read once per request under a lock, so each request sees one value.
    """

    def __init__(
        self,
        backend: Any,
        model: Optional[SwitcherModel] = None,
        embedder: Any = None,
        *,
        tau: float = 0.05,
        checkpoint_hash: Optional[str] = None,
        sampling: SamplingConfig = SamplingConfig(),
        templates: dict[ReasoningMode, PromptTemplate] = DEFAULT_TEMPLATES,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        log_sink: Optional[Callable[[dict[str, Any]], None]] = None,
    ):
        if not math.isfinite(tau):
            raise ConfigurationError("tau must be finite")
        self.backend = backend
        self.embedder = embedder if embedder is not None else backend
        self.sampling = sampling
        self.templates = templates
        self.max_in_flight = max_in_flight
        self._model: Optional[SwitcherModel] = None
        self._checkpoint_hash: Optional[str] = None
        self._tau = float(tau)
        self._tau_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._log_lock = threading.Lock()
        self._log_sink = log_sink
        self._started = time.monotonic()
        if model is not None:
            self.load_model(model, checkpoint_hash)

    # -- state ---------------------------------------------------------------

    def load_model(self, model: SwitcherModel, checkpoint_hash: Optional[str] = None) -> None:
        if self._model is not None:
            raise ConfigurationError("switcher weights are fixed after load; restart to swap models")
        self._model = model.copy().eval()
        self._checkpoint_hash = checkpoint_hash

    @property
    def ready(self) -> bool:
        return self._model is not None

    @property
    def tau(self) -> float:
        with self._tau_lock:
            return self._tau

    def set_tau(self, tau: Any) -> dict[str, Any]:
        if isinstance(tau, bool) or not isinstance(tau, (int, float)) or not math.isfinite(tau):
            raise ValueError("tau must be a finite number")
        with self._tau_lock:
            old, self._tau = self._tau, float(tau)
        logger.info("tau changed from %r to %r", old, float(tau))
        return self.get_config()

    def get_config(self) -> dict[str, Any]:
        return {
            "tau": self.tau,
            "checkpoint_sha256": self._checkpoint_hash,
            "input_dim": None if self._model is None else self._model.arch.input_dim,
            "max_in_flight": self.max_in_flight,
            "sampling": self.sampling.to_dict(),
            "backend": getattr(self.backend, "fingerprint", type(self.backend).__name__),
        }

    def healthz(self) -> dict[str, Any]:
        uptime = time.monotonic() - self._started
        if not self.ready:
            return {"status": "not-ready", "checkpoint_sha256": None, "backend_reachable": None, "uptime_s": uptime}
        ping = getattr(self.backend, "ping", None)
        try:
            reachable = bool(ping()) if ping is not None else True
        except Exception:  # noqa: BLE001 - health probes never raise
            reachable = False
        return {
            "status": "ok" if reachable else "degraded",
            "checkpoint_sha256": self._checkpoint_hash,
            "backend_reachable": reachable,
            "uptime_s": uptime,
        }

    # -- routing ---------------------------------------------------------------

    def decide_for(self, query_text: str, tau: float) -> tuple[RoutingDecision, dict[str, float]]:
        """Embed plus switcher forward only; no generation."""
        if self._model is None:
            raise RouteFailure(503, "service not ready: no checkpoint loaded")
        t0 = time.perf_counter()
        emb = self.embedder.embed(query_text)
        embed_ms = _ms(t0)
        t1 = time.perf_counter()
        sc, lc = predict_one(self._model, emb)
        decision = decide(sc, lc, tau)
        return decision, {"embed_ms": embed_ms, "switch_ms": _ms(t1)}

    def route(self, request: RouteRequest) -> RouteResponse:
        if not self._slots.acquire(blocking=False):
            failure = RouteFailure(429, "too many requests in flight", request.request_id)
            self._log(request.request_id or "", None, None, 0.0, failure)
            raise failure
        try:
            return self._route(request)
        finally:
            self._slots.release()

    def _route(self, request: RouteRequest) -> RouteResponse:
        rid = request.request_id or uuid.uuid4().hex
        start = time.perf_counter()
        latency = {"embed_ms": 0.0, "switch_ms": 0.0, "generate_ms": 0.0}
        decision: Optional[RoutingDecision] = None
        try:
            if request.mode_override is not None:
                decision = RoutingDecision(request.mode_override)
            else:
                tau = self.tau if request.tau_override is None else request.tau_override
                try:
                    decision, timings = self.decide_for(request.query_text, tau)
                except RouteFailure:
                    raise
                except CotSwitchError as exc:
                    raise RouteFailure(502, f"embedding failed: {exc}") from exc
                latency.update(timings)

            query = Query(id=rid, text=request.query_text, gold_answer="")
            prompt = render_prompt(query, decision.mode, self.templates)
            t2 = time.perf_counter()
            try:
                result = self.backend.complete(prompt, self.sampling.params_for(decision.mode))
            except CotSwitchError as exc:
                latency["generate_ms"] = _ms(t2)
                raise RouteFailure(502, f"backend generation failed: {exc}") from exc
            latency["generate_ms"] = _ms(t2)
        except RouteFailure as failure:
            failure.request_id = rid
            failure.decision = decision
            failure.latency = latency
            self._log(rid, decision, None, _ms(start), failure)
            raise
        response = RouteResponse(rid, decision, result.text, result.completion_tokens, latency)
        self._log(rid, decision, result.completion_tokens, _ms(start), None)
        return response

    def _log(
        self,
        rid: str,
        decision: Optional[RoutingDecision],
        tokens: Optional[int],
        latency_ms: float,
        failure: Optional[RouteFailure],
    ) -> None:
        d = decision.to_dict() if decision is not None else RoutingDecision(ReasoningMode.SC).to_dict()
        record = {
            "ts": time.time(),
            "request_id": rid,
            "mode": d["mode"] if decision is not None else None,
            "y_hat_sc": d["y_hat_sc"],
            "y_hat_lc": d["y_hat_lc"],
            "margin": d["margin"],
            "tau": d["tau"],
            "tokens": tokens,
            "latency_ms": latency_ms,
            "status": 200 if failure is None else failure.status,
        }
        if failure is not None:
            record["error"] = failure.message
        with self._log_lock:
            if self._log_sink is not None:
                self._log_sink(record)
            decision_log.info(json.dumps(record, sort_keys=True))


# ---------------------------------------------------------------------------
# FastAPI wrapper
# ---------------------------------------------------------------------------


def create_app(service: RouterService) -> FastAPI:
    app = FastAPI(title="cotswitch router")

    async def _json(request: Request) -> Any:
        try:
            return await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError, ValueError):
            raise ValueError("request body is not valid JSON") from None

    @app.post("/v1/route")
    async def route(request: Request):
        try:
            req = RouteRequest.from_json(await _json(request))
        except (ValueError, TypeError) as exc:
            rid = uuid.uuid4().hex
            service._log(rid, None, None, 0.0, RouteFailure(400, str(exc)))
            return JSONResponse({"error": str(exc), "request_id": rid}, status_code=400)
        try:
            resp = await run_in_threadpool(service.route, req)
        except RouteFailure as failure:
            return JSONResponse(failure.to_dict(), status_code=failure.status)
        return resp.to_dict()

    @app.get("/healthz")
    async def healthz():
        body = service.healthz()
        return JSONResponse(body, status_code=503 if body["status"] == "not-ready" else 200)

    @app.get("/v1/config")
    async def get_config():
        return service.get_config()

    @app.put("/v1/config/tau")
    async def put_tau(request: Request):
        try:
            body = await _json(request)
            if not isinstance(body, dict) or "tau" not in body:
                raise ValueError('body must be {"tau": <number>}')
            return service.set_tau(body["tau"])
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)

    return app

