"""Command-line entry point.

Subcommands: build-data, train, eval, sweep, serve, flops.

Settings resolve in order flags > environment > config file > defaults.
Exit codes: 0 success, 1 a requested check failed, 2 usage or environment
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .config import load_config_file, section
from .core import load_corpus, load_dataset, save_dataset, validate_dataset
from .data.builder import DEFAULT_K, build_dataset
from .decision import parse_policies
from .errors import CheckpointError, ConfigurationError, CotSwitchError
from .evaluation import DEFAULT_TAU_GRID, curve_metrics, evaluate, export_curve, sweep_tau
from .llm.client import BackendConfig, HTTPBackend, SamplingConfig
from .llm.embedders import resolve_embedder
from .llm.mock import MockBackend
from .switcher.accounting import count_params, estimate_flops, human
from .switcher.checkpoint import checkpoint_fingerprint, load_checkpoint, save_checkpoint
from .switcher.net import SwitcherArchitecture
from .switcher.train import TrainConfig, train

logger = logging.getLogger("cotswitch")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad invocation or unusable environment; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------


class Settings:
    """Flag > env > file > default lookup for one subcommand."""

    def __init__(self, args: argparse.Namespace, file_data: dict[str, Any], env: Optional[dict[str, str]] = None):
        self.args = args
        self.file = section(file_data, args.command)
        self.env = os.environ if env is None else env

    def get(self, name: str, default: Any = None, env_var: Optional[str] = None) -> Any:
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if env_var and self.env.get(env_var):
            return self.env[env_var]
        if name in self.file:
            return self.file[name]
        return default


def _effective(settings: Settings, names: Sequence[str]) -> dict[str, Any]:
    out = {"command": settings.args.command, "version": __version__}
    for n in names:
        v = settings.get(n)
        out[n] = list(v) if isinstance(v, tuple) else v
    return out


def _sampling(s: Settings) -> SamplingConfig:
    return SamplingConfig(
        temperature=float(s.get("temperature", 0.7)),
        top_p=float(s.get("top_p", 0.95)),
        max_tokens_sc=int(s.get("max_tokens_sc", 4096)),
        max_tokens_lc=int(s.get("max_tokens_lc", 16384)),
    )


def _backend(s: Settings, corpus=None):
    if s.get("mock", False):
        if corpus is None:
            raise UsageError("--mock needs a corpus (pass --corpus) to plant difficulties")
        try:
            return MockBackend(corpus, noise_seed=int(s.get("mock_noise_seed", 0)))
        except ConfigurationError as exc:
            raise UsageError(f"--mock: {exc}") from exc
    url = s.get("backend_url", env_var="COTSWITCH_BACKEND_URL")
    if not url:
        raise UsageError("no backend: pass --backend-url, set COTSWITCH_BACKEND_URL, or use --mock")
    key_var = s.get("api_key_env", "COTSWITCH_API_KEY")
    return HTTPBackend(
        BackendConfig(
            base_url=url,
            model_name=str(s.get("model_name", "default")),
            api_key=s.env.get(key_var),
            timeout=float(s.get("timeout", 600.0)),
            max_retries=int(s.get("max_retries", 3)),
            concurrency=int(s.get("concurrency", 8)),
            sampling=_sampling(s),
        )
    )


def _corpus(path: Optional[str]):
    if not path:
        raise UsageError("a corpus path is required (--corpus)")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"corpus not found: {p}")
    try:
        corpus = load_corpus(p)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"unreadable corpus {p}: {exc}") from exc
    if not corpus:
        raise UsageError(f"corpus {p} is empty")
    return corpus


def _model(path: Optional[str]):
    if not path:
        raise UsageError("a checkpoint path is required (--checkpoint)")
    try:
        return load_checkpoint(path), checkpoint_fingerprint(path)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from exc


def _write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _grid(spec: Optional[str]) -> tuple[float, ...]:
    """``"a:b:step"`` range or comma-separated list; ``None`` means the default grid."""
    if spec is None:
        return DEFAULT_TAU_GRID
    try:
        if ":" in spec:
            lo, hi, step = (float(x) for x in spec.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError("range needs lo <= hi and a positive step")
            n = int(round((hi - lo) / step))
            return tuple(round(lo + i * step, 10) for i in range(n + 1))
        return tuple(float(x) for x in spec.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f'bad --grid {spec!r} ({exc}); expected "lo:hi:step" or "t1,t2,..."') from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build_data(s: Settings) -> int:
    corpus = _corpus(s.get("corpus"))
    out = s.get("out")
    if not out:
        raise UsageError("--out is required")
    k = int(s.get("k", DEFAULT_K))
    seed = int(s.get("seed", 0))
    backend = _backend(s, corpus)
    embedder = resolve_embedder(backend, s.get("embedder", "auto"), int(s.get("embed_dim", 1024)))
    progress = s.get("progress") or f"{out}.progress"
    try:
        examples, report = build_dataset(
            corpus,
            k,
            backend,
            embedder,
            sampling=_sampling(s),
            seed=seed,
            checkpoint_path=progress,
            concurrency=int(s.get("concurrency", 1)),
        )
    except CotSwitchError as exc:
        print(f"error: {exc} (partial progress kept in {progress})", file=sys.stderr)
        return EXIT_USAGE
    save_dataset(out, examples)
    body = report.to_dict()
    body["config"] = _effective(s, ["corpus", "out", "k", "seed", "mock", "mock_noise_seed", "embedder", "embed_dim"])
    body["config"]["sampling"] = report.sampling
    _write_json(s.get("report") or f"{out}.report.json", body)
    tokens = report.tokens
    print(f"wrote {len(examples)} examples to {out}")
    print(f"sampled tokens: SC={tokens['SC']} LC={tokens['LC']} total={tokens['SC'] + tokens['LC']}")
    return EXIT_OK


def cmd_train(s: Settings) -> int:
    path = s.get("dataset")
    if not path or not Path(path).is_file():
        raise UsageError(f"dataset not found: {path}")
    out = s.get("out")
    if not out:
        raise UsageError("--out is required")
    try:
        data = load_dataset(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid dataset {path}: {exc}") from exc
    problems = validate_dataset(data)
    if problems:
        for v in problems[:10]:
            print(f"invalid dataset: {v.kind} {v.query_id}: {v.detail}", file=sys.stderr)
        return EXIT_USAGE
    hidden = s.get("hidden_dims")
    try:
        config = TrainConfig(
            learning_rate=float(s.get("lr", 1e-3)),
            batch_size=int(s.get("batch_size", 64)),
            max_epochs=int(s.get("max_epochs", 50)),
            early_stop_patience=int(s.get("patience", 5)),
            lambda_margin=float(s.get("lambda_margin", 1.0)),
            weight_decay=float(s.get("weight_decay", 0.01)),
            seed=int(s.get("seed", 0)),
            val_fraction=float(s.get("val_fraction", 0.1)),
            hidden_dims=tuple(int(h) for h in hidden) if hidden else (1024, 768, 512, 256),
            dropout_rate=float(s.get("dropout", 0.2)),
        )
        model, history = train(data, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    meta = {"dataset": str(path), "train": config.to_dict()}
    digest = save_checkpoint(model, out, seed=config.seed, config=meta)
    body = history.to_dict()
    body["config"] = meta
    body["checkpoint_sha256"] = digest
    _write_json(s.get("history") or f"{out}.history.json", body)
    print(
        f"best epoch {history.best_epoch} of {len(history.epochs)}, "
        f"val l_switch {history.best_val_switch:.6f}; checkpoint {out} sha256={digest[:12]}"
    )
    return EXIT_OK


def _eval_inputs(s: Settings, need_model: bool):
    corpus = _corpus(s.get("corpus"))
    model, digest = _model(s.get("checkpoint")) if need_model or s.get("checkpoint") else (None, None)
    backend = _backend(s, corpus)
    embedder = resolve_embedder(backend, s.get("embedder", "auto"), int(s.get("embed_dim", 1024)))
    return corpus, model, digest, backend, embedder


def cmd_eval(s: Settings) -> int:
    try:
        policies = parse_policies(s.get("policies") or "")
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    corpus, model, digest, backend, embedder = _eval_inputs(s, any(p.kind == "switcher" for p in policies))
    seed = int(s.get("seed", 0))
    n = int(s.get("n_samples", 1))
    results = [
        evaluate(p, corpus, backend, model, embedder, n, seed, sampling=_sampling(s)) for p in policies
    ]
    config = _effective(s, ["corpus", "checkpoint", "policies", "seed", "n_samples", "mock", "mock_noise_seed", "embedder"])
    config["checkpoint_sha256"] = digest
    body = {"config": config, "results": [r.to_dict(with_records=bool(s.get("records", False))) for r in results]}
    out = s.get("out")
    if out:
        _write_json(out, body)
    for r in results:
        print(f"{r.policy:32s} accuracy={r.accuracy:.4f} avg_tokens={r.avg_tokens:.1f} lc_fraction={r.lc_fraction:.3f}")
    return EXIT_OK


def cmd_flops(s: Settings) -> int:
    dims = s.get("input_dim") or []
    if not dims:
        raise UsageError("--input-dim is required")
    hidden = s.get("hidden_dims")
    for d in dims:
        arch = SwitcherArchitecture(int(d), tuple(hidden) if hidden else (1024, 768, 512, 256))
        pc = count_params(arch)
        print(f"input_dim={d} params={human(pc.weights_and_biases)} flops={human(estimate_flops(arch))} "
              f"(exact: {pc.weights_and_biases} params, {estimate_flops(arch)} flops, +{pc.norm_params} norm)")
    return EXIT_OK


def cmd_sweep(s: Settings) -> int:
    if s.get("flops", False):
        return cmd_flops(s)
    grid = _grid(s.get("grid"))
    corpus, model, digest, backend, embedder = _eval_inputs(s, True)
    seed = int(s.get("seed", 0))
    curve = sweep_tau(model, corpus, backend, grid, embedder, int(s.get("n_samples", 1)), seed, sampling=_sampling(s))
    out = s.get("out")
    if not out:
        raise UsageError("--out is required")
    export_curve(curve, out)
    metrics = curve_metrics(curve)
    config = _effective(s, ["corpus", "checkpoint", "grid", "seed", "n_samples", "mock", "mock_noise_seed", "embedder"])
    config["checkpoint_sha256"] = digest
    config["tau_grid"] = sorted(set(grid))
    body = {**metrics.to_dict(), "t_sc": curve.t_sc, "t_lc": curve.t_lc,
            "a_sc": curve.sc_endpoint[1], "a_lc": curve.lc_endpoint[1], "config": config}
    _write_json(s.get("report") or f"{out}.auc.json", body)
    print(f"auc_ac={metrics.auc_ac:.4f} auc_ac_lb={metrics.auc_ac_lb:.4f} nauc_ac={metrics.nauc_ac:.4f}")
    return EXIT_OK


def cmd_serve(s: Settings) -> int:
    from .service import RouterService, ServiceSettings, create_app

    try:
        cfg = ServiceSettings.resolve(
            s.file,
            s.env,
            {"bind": s.args.bind, "checkpoint": s.args.checkpoint, "tau": s.args.tau,
             "backend_url": s.args.backend_url, "max_in_flight": s.args.max_in_flight},
        )
        host, port = cfg.host_port()
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from exc
    model, digest = _model(cfg.checkpoint)  # fails before binding
    corpus = _corpus(s.get("corpus")) if s.get("mock", False) else None
    if not s.get("mock", False) and cfg.backend_url:
        s.args.backend_url = cfg.backend_url
    backend = _backend(s, corpus)
    embedder = resolve_embedder(backend, s.get("embedder", "auto"), model.arch.input_dim)
    service = RouterService(backend, model, embedder, tau=cfg.tau, checkpoint_hash=digest,
                            sampling=_sampling(s), max_in_flight=cfg.max_in_flight)

    import uvicorn

    sock = socket.socket(socket.AF_INET6 if ":" in host else socket.AF_INET)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        sock.close()
        print(f"error: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    server = uvicorn.Server(
        uvicorn.Config(create_app(service), log_level="info", timeout_graceful_shutdown=30)
    )
    print(f"serving on http://{host}:{sock.getsockname()[1]} (checkpoint sha256={digest[:12]})", flush=True)
    server.run(sockets=[sock])  # SIGTERM/SIGINT drain in-flight requests
    return EXIT_OK


COMMANDS = {
    "build-data": cmd_build_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "serve": cmd_serve,
    "flops": cmd_flops,
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cotswitch", description="Route queries between short and long reasoning.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="TOML config file; [<subcommand>] tables override top-level keys")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--mock", action="store_const", const=True, help="use the planted-difficulty mock backend")
    p.add_argument("--mock-noise-seed", type=int, help="noise seed for the mock backend")
    p.add_argument("--backend-url", help="OpenAI-compatible base URL (env COTSWITCH_BACKEND_URL)")
    p.add_argument("--api-key-env", help="name of the env var holding the API key (default COTSWITCH_API_KEY)")
    p.add_argument("--model-name", help="model name sent to the backend")
    p.add_argument("--embedder", choices=["auto", "backend", "hashing"], help="embedding source (default auto)")
    p.add_argument("--embed-dim", type=int, help="hashing embedder dimension (default 1024)")
    p.add_argument("--max-tokens-sc", type=int)
    p.add_argument("--max-tokens-lc", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    b = sub.add_parser("build-data", help="sample k responses per mode and label pass rates")
    b.add_argument("--corpus")
    b.add_argument("--out", help="output dataset JSONL")
    b.add_argument("--k", type=int, help=f"samples per mode (default {DEFAULT_K})")
    b.add_argument("--report", help="report JSON (default <out>.report.json)")
    b.add_argument("--progress", help="resume file (default <out>.progress)")
    b.add_argument("--concurrency", type=int)

    t = sub.add_parser("train", help="fit the switcher on a labeled dataset")
    t.add_argument("--dataset")
    t.add_argument("--out", help="checkpoint path")
    t.add_argument("--history", help="history JSON (default <out>.history.json)")
    t.add_argument("--lambda-margin", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--dropout", type=float)
    t.add_argument("--hidden-dims", type=int, nargs="+")

    e = sub.add_parser("eval", help="score routing policies on a corpus")
    e.add_argument("--checkpoint")
    e.add_argument("--corpus")
    e.add_argument("--policies", help='e.g. "sc-only,lc-only,switcher:tau=0.05"')
    e.add_argument("--out", help="results JSON")
    e.add_argument("--n-samples", type=int)
    e.add_argument("--records", action="store_const", const=True, help="include per-query records")

    w = sub.add_parser("sweep", help="sweep tau and report the trade-off curve area")
    w.add_argument("--checkpoint")
    w.add_argument("--corpus")
    w.add_argument("--grid", help='"lo:hi:step" or "t1,t2,..." (default -1..1 step 0.02 plus +-1.01); write --grid=-2,2 when the list starts with a minus')
    w.add_argument("--out", help="curve CSV")
    w.add_argument("--report", help="AUC JSON (default <out>.auc.json)")
    w.add_argument("--n-samples", type=int)
    w.add_argument("--flops", action="store_const", const=True, help="print parameter/FLOP counts and exit")
    w.add_argument("--input-dim", type=int, nargs="+")
    w.add_argument("--hidden-dims", type=int, nargs="+")

    v = sub.add_parser("serve", help="run the routing gateway")
    v.add_argument("--checkpoint", help="env COTSWITCH_CHECKPOINT")
    v.add_argument("--bind", help=f"host:port (env COTSWITCH_BIND, default 127.0.0.1:8080)")
    v.add_argument("--tau", type=float)
    v.add_argument("--max-in-flight", type=int)
    v.add_argument("--corpus", help="corpus for --mock")

    f = sub.add_parser("flops", help="print switcher parameter and FLOP counts")
    f.add_argument("--input-dim", type=int, nargs="+")
    f.add_argument("--hidden-dims", type=int, nargs="+")
    return p


def main(argv: Optional[Sequence[str]] = None, env: Optional[dict[str, str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = Settings(args, load_config_file(args.config), env)
        return COMMANDS[args.command](settings)
    except (UsageError, CotSwitchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
