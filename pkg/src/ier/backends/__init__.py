"""Pluggable boundary to chat agents, text embedders and the compile/run sandbox."""

from .agents import STOP_MARKER, AgentBackend, RemoteAgent, ScriptedAgent, Turn, is_stop, parse_reply, render_files
from .embedders import Embedder, HashingEmbedder, RemoteEmbedder, cosine, tokenize
from .sandbox import RunOutcome, Sandbox

__all__ = [
    "STOP_MARKER",
    "AgentBackend",
    "Embedder",
    "HashingEmbedder",
    "RemoteAgent",
    "RemoteEmbedder",
    "RunOutcome",
    "Sandbox",
    "ScriptedAgent",
    "Turn",
    "cosine",
    "is_stop",
    "parse_reply",
    "render_files",
    "tokenize",
]
