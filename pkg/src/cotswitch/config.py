"""TOML config files, with per-subcommand tables.

Top-level keys apply everywhere; a table named after a subcommand
(``[train]``, ``[serve]``...) overrides them for that subcommand only.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

try:
    import tomllib  # type: ignore[import-not-found]
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError


def load_config_file(path: Optional[str | Path]) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    try:
        return tomllib.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {p}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config file {p} is not valid TOML: {exc}") from exc


def section(data: dict[str, Any], name: str) -> dict[str, Any]:
    """Top-level scalars overlaid by the ``[name]`` table; dashes become underscores."""
    out = {k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)}
    out.update({k.replace("-", "_"): v for k, v in data.get(name, {}).items()})
    return out
