"""Service configuration with flags > env > file > defaults precedence.

The config file is flat ``key=value`` lines ('#' comments); environment
variables use the ``CIRCUITLIT_`` prefix with the key upper-cased
(CIRCUITLIT_DB_PATH, ...). Fallback and scripted provider modes need no
secrets; remote modes must name the env var holding their API key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

ENV_PREFIX = "CIRCUITLIT_"

PROVIDER_MODES = ("fallback", "remote", "scripted")
FETCH_MODES = ("fixture", "remote")


@dataclass
class ServiceConfig:
    bind_addr: str = "127.0.0.1:8777"
    db_path: str = "circuitlit.idx"
    sessions_dir: str = "sessions"
    cache_path: str = "context_cache.jsonl"
    fetch_dir: str = "fetched"
    fixture_dir: str = ""
    cors_allowed_origins: str = "*"

    chat_mode: str = "fallback"
    chat_endpoint: str = ""
    chat_api_key_env: str = ""
    chat_script: str = ""
    embed_mode: str = "fallback"
    embed_endpoint: str = ""
    embed_api_key_env: str = ""
    embed_dim: int = 256
    rerank_mode: str = "fallback"
    rerank_endpoint: str = ""
    rerank_api_key_env: str = ""
    fetch_mode: str = "fixture"

    max_steps: int = 10
    max_tool_output_chars: int = 4000
    budget_tokens: int = 2000
    search_k: int = 5
    w_sem: float = 0.8
    w_kw: float = 0.2
    rrf_k: float = 60.0
    prefuse_k: int = 150
    final_k: int = 20
    max_chunk_chars: int = 4000
    overlap_chars: int = 400

    def validate(self) -> None:
        for name in ("chat_mode", "embed_mode", "rerank_mode"):
            mode = getattr(self, name)
            if mode not in PROVIDER_MODES:
                raise ValueError(f"{name}={mode!r}, expected one of {PROVIDER_MODES}")
        if self.fetch_mode not in FETCH_MODES:
            raise ValueError(f"fetch_mode={self.fetch_mode!r}, expected one of {FETCH_MODES}")
        for kind in ("chat", "embed", "rerank"):
            if getattr(self, f"{kind}_mode") == "remote":
                if not getattr(self, f"{kind}_endpoint"):
                    raise ValueError(f"{kind}_mode=remote requires {kind}_endpoint")
                if not getattr(self, f"{kind}_api_key_env"):
                    raise ValueError(f"{kind}_mode=remote requires {kind}_api_key_env")
        if self.chat_mode == "scripted" and not self.chat_script:
            raise ValueError("chat_mode=scripted requires chat_script")
        if self.fetch_mode == "fixture" and not self.fixture_dir:
            # Tolerated: the paper_fetcher tool reports the missing provider.
            pass


def _coerce(value: str, target_type: type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    return target_type(value)


def parse_config_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(
    config_file: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, object] | None = None,
) -> ServiceConfig:
    """Merge sources by precedence and validate the result."""
    env = os.environ if env is None else env
    flags = flags or {}
    field_types = {f.name: f.type for f in fields(ServiceConfig)}
    values: dict[str, object] = {}

    if config_file is not None:
        for key, raw in parse_config_file(config_file).items():
            if key not in field_types:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = raw

    for name in field_types:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = env[env_key]

    for key, value in flags.items():
        if value is None:
            continue
        if key not in field_types:
            raise ValueError(f"unknown config flag {key!r}")
        values[key] = value

    defaults = ServiceConfig()
    kwargs = {}
    for name in field_types:
        if name not in values:
            continue
        value = values[name]
        target = type(getattr(defaults, name))
        kwargs[name] = _coerce(value, target) if isinstance(value, str) and target is not str else value
    cfg = ServiceConfig(**kwargs)
    cfg.validate()
    return cfg
