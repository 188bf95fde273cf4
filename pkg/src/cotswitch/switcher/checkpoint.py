"""Versioned JSON checkpoints with byte-stable output."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..errors import CheckpointError
from .net import SwitcherArchitecture, SwitcherModel, buffer_names, param_names

FORMAT_VERSION = 1


def _created_at() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible artifacts
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
        if epoch
        else _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    )
    return when.isoformat().replace("+00:00", "Z")


def _tensor(arr: np.ndarray) -> dict[str, Any]:
    a = np.ascontiguousarray(arr, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def dumps_checkpoint(
    model: SwitcherModel,
    seed: Optional[int] = None,
    created_at: Optional[str] = None,
    config: Optional[dict[str, Any]] = None,
) -> str:
    for name, arr in {**model.params, **model.buffers}.items():
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"refusing to save non-finite tensor {name}")
    tensors = {n: _tensor(model.params[n]) for n in param_names(model.arch)}
    tensors.update({n: _tensor(model.buffers[n]) for n in buffer_names(model.arch)})
    envelope = {
        "format_version": FORMAT_VERSION,
        "architecture": model.arch.to_dict(),
        "batchnorm": {"momentum": model.momentum, "eps": model.eps},
        "seed": seed,
        "created_at": created_at or _created_at(),
        "config": config,
        "tensors": tensors,
    }
    return json.dumps(envelope, sort_keys=True, separators=(",", ":"))


def save_checkpoint(model: SwitcherModel, path: str | Path, **meta: Any) -> str:
    """Write the checkpoint; returns the sha256 of the written bytes."""
    text = dumps_checkpoint(model, **meta)
    Path(path).write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def loads_checkpoint(text: str) -> SwitcherModel:
    try:
        env = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc.msg} at char {exc.pos}") from exc
    if not isinstance(env, dict) or "format_version" not in env:
        raise CheckpointError("not a switcher checkpoint (missing format_version)")
    if env["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {env['format_version']}; this build reads {FORMAT_VERSION}"
        )
    try:
        arch = SwitcherArchitecture.from_dict(env["architecture"])
        raw = env["tensors"]

        def arr(name: str) -> np.ndarray:
            t = raw[name]
            return np.array(t["data"], dtype=np.float64).reshape(t["shape"])

        params = {n: arr(n) for n in param_names(arch)}
        buffers = {n: arr(n) for n in buffer_names(arch)}
        bn = env.get("batchnorm", {})
        model = SwitcherModel(arch, params, buffers, bn.get("momentum", 0.1), bn.get("eps", 1e-5))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint contents: {exc}") from exc
    return model.eval()


def load_checkpoint(path: str | Path) -> SwitcherModel:
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    return loads_checkpoint(p.read_text(encoding="utf-8"))


def checkpoint_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
