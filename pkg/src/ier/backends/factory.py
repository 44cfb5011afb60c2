from __future__ import annotations

import os

from ..errors import ConfigurationError
from .agents import RemoteAgent, ScriptedAgent
from .embedders import HashingEmbedder, RemoteEmbedder
from .http import set_max_inflight
from .sandbox import Sandbox


def _token(env_name: str) -> str:
    token = os.environ.get(env_name)
    if not token:
        raise ConfigurationError(f"environment variable {env_name} is not set")
    return token


def build_agent(cfg):
    b = cfg.backend
    if b.mode == "scripted":
        if not b.fixtures:
            raise ConfigurationError("scripted backend needs a fixtures path")
        return ScriptedAgent.from_jsonl(b.fixtures)
    set_max_inflight(b.max_inflight)
    return RemoteAgent(
        b.endpoint, b.model, token=_token(b.token_env), temperature=b.temperature,
        timeout=b.timeout, retries=b.retries, templates=cfg.prompts,
    )


def build_embedder(cfg):
    e = cfg.embedder
    if e.mode == "local":
        return HashingEmbedder(e.dim, e.seed)
    return RemoteEmbedder(e.endpoint, e.model, e.dim, token=_token(e.token_env), timeout=e.timeout, retries=e.retries)


def build_sandbox(cfg) -> Sandbox:
    s = cfg.sandbox
    return Sandbox(s.compile_cmd, s.run_cmd or None, s.compile_timeout, s.run_timeout, s.max_parallel,
                   s.source_suffixes)
