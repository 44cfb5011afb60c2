"""Run configuration: dataclass defaults < TOML file < command-line overrides."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends.sandbox import DEFAULT_COMPILE_CMD, DEFAULT_RUN_CMD, DEFAULT_SOURCE_SUFFIXES
from .errors import ConfigurationError

PATTERNS = ("successive", "cumulative", "eliminated")


@dataclass
class BackendConfig:
    mode: str = "scripted"
    fixtures: str | None = None
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    token_env: str = "OPENAI_API_KEY"
    temperature: float = 0.2
    timeout: float = 120.0
    retries: int = 3
    max_inflight: int = 4


@dataclass
class EmbedderConfig:
    mode: str = "local"
    dim: int = 256
    seed: int = 0
    endpoint: str = "https://api.openai.com/v1/embeddings"
    model: str = "text-embedding-ada-002"
    token_env: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    retries: int = 3


@dataclass
class SandboxConfig:
    compile_cmd: list[str] = field(default_factory=lambda: list(DEFAULT_COMPILE_CMD))
    run_cmd: list[str] = field(default_factory=lambda: list(DEFAULT_RUN_CMD))
    compile_timeout: float = 30.0
    run_timeout: float = 30.0
    max_parallel: int = 4
    source_suffixes: list[str] = field(default_factory=lambda: list(DEFAULT_SOURCE_SUFFIXES))


@dataclass
class RunConfig:
    pattern: str = "successive"
    n_batches: int = 6
    k: int = 1
    epsilon: float = 0.95
    theta: float = 0.95
    max_review_rounds: int = 3
    max_test_rounds: int = 3
    seed: int = 0
    workers: int = 1
    # "logical" durations count agent calls, which keeps scripted runs byte-reproducible
    clock: str = "auto"
    corpus: str | None = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    prompts: dict[str, str] = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.pattern not in PATTERNS:
            raise ConfigurationError(f"pattern must be one of {PATTERNS}, got {self.pattern!r}")
        if self.n_batches < 1:
            raise ConfigurationError("n_batches must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        for name in ("epsilon", "theta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")
        if self.max_review_rounds < 0 or self.max_test_rounds < 0:
            raise ConfigurationError("round caps must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.clock not in ("auto", "wall", "logical"):
            raise ConfigurationError(f"unknown clock {self.clock!r}")
        if self.backend.mode not in ("scripted", "remote"):
            raise ConfigurationError(f"unknown backend mode {self.backend.mode!r}")
        if self.backend.mode == "scripted" and not self.backend.fixtures:
            raise ConfigurationError("scripted backend needs a fixtures path")
        if self.embedder.mode not in ("local", "remote"):
            raise ConfigurationError(f"unknown embedder mode {self.embedder.mode!r}")
        return self

    @property
    def effective_clock(self) -> str:
        if self.clock != "auto":
            return self.clock
        return "logical" if self.backend.mode == "scripted" else "wall"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    # fields that may change between an interrupted run and its resumption
    RESUME_FREE = ("workers",)

    def fingerprint(self) -> dict[str, Any]:
        d = self.to_dict()
        for k in self.RESUME_FREE:
            d.pop(k, None)
        return d


_SECTIONS = {"backend": BackendConfig, "embedder": EmbedderConfig, "sandbox": SandboxConfig}


def _apply(obj, values: dict[str, Any], where: str):
    known = {f.name for f in fields(obj)}
    for key, value in values.items():
        if key not in known:
            raise ConfigurationError(f"unknown key {where}{key}")
    return replace(obj, **values)


def from_dict(data: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Build a config from nested mappings (``run`` keys may sit at top level or under ``[run]``)."""
    cfg = base or RunConfig()
    top = {k: v for k, v in data.items() if k not in _SECTIONS and k not in ("run", "prompts")}
    top.update(data.get("run", {}))
    updates: dict[str, Any] = {}
    for name in _SECTIONS:
        if name in data:
            updates[name] = _apply(getattr(cfg, name), dict(data[name]), f"{name}.")
    if "prompts" in data:
        updates["prompts"] = {**cfg.prompts, **{str(k): str(v) for k, v in data["prompts"].items()}}
    cfg = _apply(cfg, top, "")
    return replace(cfg, **updates)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
        cfg = from_dict(data, cfg)
        base_dir = Path(path).resolve().parent
        # relative data paths in a config file are relative to that file
        if cfg.corpus and not os.path.isabs(cfg.corpus):
            cfg.corpus = str(base_dir / cfg.corpus)
        if cfg.backend.fixtures and not os.path.isabs(cfg.backend.fixtures):
            cfg.backend.fixtures = str(base_dir / cfg.backend.fixtures)
    if overrides:
        cfg = from_dict(overrides, cfg)
    return cfg.validate()
