"""Instructive/responsive agent backends.

``ScriptedAgent`` replays a fixture table and never touches the network;
``RemoteAgent`` talks to a chat-completions endpoint.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from ..chain import Files, Solution, make_files
from ..errors import BackendError, FixtureError, InvalidArgument, ParseError
from . import prompts
from .http import post_json

STOP_MARKER = "<INFO> Finished"

FewShot = Sequence[tuple[str, str]]


@dataclass(frozen=True)
class Turn:
    task_id: str
    task_text: str
    phase: str
    round: int
    solution: Solution
    feedback: str = ""


class AgentBackend(Protocol):
    def propose_instruction(self, turn: Turn, fewshot: FewShot) -> str: ...

    def respond_solution(self, turn: Turn, instruction: str, fewshot: FewShot) -> Files: ...

    def pseudo_instruction(self, task_id: str, task_text: str, source: Solution, target: Solution) -> str: ...


def is_stop(instruction: str) -> bool:
    return instruction.strip().startswith(STOP_MARKER)


_PATH_RE = re.compile(r"^[\w][\w./-]*$")


def parse_reply(reply: str) -> Files:
    """Extract files from a reply that uses path-header + fenced-block layout::

        main.py
        ```python
        print("hi")
        ```
    """
    lines = reply.splitlines()
    files: list[tuple[str, str]] = []
    header: str | None = None
    k = 0
    while k < len(lines):
        line = lines[k]
        stripped = line.strip()
        if stripped.startswith("```") and header is not None:
            body: list[str] = []
            k += 1
            while k < len(lines) and lines[k].strip() != "```":
                body.append(lines[k])
                k += 1
            if k == len(lines):
                raise BackendError(f"unterminated code fence for {header}", raw=reply)
            files.append((header, "\n".join(body) + "\n"))
            header = None
        elif stripped:
            header = stripped if _PATH_RE.match(stripped) and ".." not in stripped.split("/") else None
        k += 1
    if not files:
        raise BackendError("reply contains no file blocks", raw=reply)
    try:
        return make_files(files)
    except InvalidArgument as exc:
        raise BackendError(str(exc), raw=reply) from exc


def render_files(files: Files) -> str:
    """Inverse of :func:`parse_reply` for files whose content has no bare fence lines."""
    out = []
    for path, content in files:
        body = content if content.endswith("\n") else content + "\n"
        out.append(f"{path}\n```\n{body}```\n")
    return "\n".join(out)


# --- scripted -----------------------------------------------------------------


def _round_key(value) -> int | tuple[int, ...]:
    if isinstance(value, list):
        return tuple(int(v) for v in value)
    return int(value)


class ScriptedAgent:
    """Replays canned turns keyed by ``(task_id, phase, round)``.

    Fixture lines carry ``instruction`` and, for non-stop turns, ``solution``
    (reply text in fenced-block form) or ``files``. Pseudo-instruction lines
    use phase ``"pseudo"`` and a ``[i, j]`` round.
    """

    mode = "scripted"

    def __init__(self, entries: dict[tuple, dict]):
        self.entries = entries

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedAgent":
        entries: dict[tuple, dict] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = (str(rec["task_id"]), str(rec["phase"]), _round_key(rec["round"]))
                    rec["instruction"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"bad fixture line: {exc}", path=str(path), line=lineno) from exc
                if key in entries:
                    raise ParseError(f"duplicate fixture key {key}", path=str(path), line=lineno)
                entries[key] = rec
        return cls(entries)

    def _entry(self, task_id: str, phase: str, rnd) -> dict:
        try:
            return self.entries[(task_id, phase, rnd)]
        except KeyError:
            raise FixtureError(f"no fixture entry for task={task_id!r} phase={phase!r} round={rnd!r}") from None

    def propose_instruction(self, turn: Turn, fewshot: FewShot) -> str:
        text = self._entry(turn.task_id, turn.phase, turn.round)["instruction"]
        if not text.strip():
            raise BackendError("empty instruction in fixture", raw=text)
        return text

    def respond_solution(self, turn: Turn, instruction: str, fewshot: FewShot) -> Files:
        rec = self._entry(turn.task_id, turn.phase, turn.round)
        if "files" in rec:
            return make_files((f["path"], f["content"]) for f in rec["files"])
        if "solution" not in rec:
            raise FixtureError(f"fixture {turn.task_id}/{turn.phase}/{turn.round} has no solution")
        return parse_reply(rec["solution"])

    def pseudo_instruction(self, task_id: str, task_text: str, source: Solution, target: Solution) -> str:
        text = self._entry(task_id, "pseudo", (source.index, target.index))["instruction"]
        if not text.strip():
            raise BackendError("empty pseudo instruction", raw=text)
        return text


# --- remote -------------------------------------------------------------------


class RemoteAgent:
    mode = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        token: str | None = None,
        temperature: float = 0.2,
        timeout: float = 120.0,
        retries: int = 3,
        templates: dict[str, str] | None = None,
        transport=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self._token = token
        self.temperature = temperature
        self.timeout = timeout
        self.retries = retries
        self.templates = {
            "instructor_system": prompts.INSTRUCTOR_SYSTEM,
            "responder_system": prompts.RESPONDER_SYSTEM,
            "instruct": prompts.INSTRUCT_TEMPLATE,
            "respond": prompts.RESPOND_TEMPLATE,
            "pseudo": prompts.PSEUDO_TEMPLATE,
        }
        self.templates.update(templates or {})
        self._transport = transport

    def __repr__(self) -> str:
        return f"RemoteAgent(endpoint={self.endpoint!r}, model={self.model!r})"

    def chat(self, system: str, user: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
            "temperature": self.temperature,
        }
        body = post_json(
            self.endpoint, payload, token=self._token, timeout=self.timeout,
            retries=self.retries, transport=self._transport,
        )
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError("malformed chat completion", raw=json.dumps(body)[:2000]) from exc
        if not isinstance(content, str) or not content.strip():
            raise BackendError("empty completion", raw=json.dumps(body)[:2000])
        return content

    def build_instruct_prompt(self, turn: Turn, fewshot: FewShot) -> str:
        feedback = f"\nTest feedback:\n{turn.feedback}\n" if turn.feedback else ""
        return self.templates["instruct"].format(
            task=turn.task_text,
            phase=turn.phase,
            round=turn.round,
            solution=turn.solution.text,
            feedback=feedback,
            examples=prompts.examples_section(fewshot, "Code", "Instruction"),
        )

    def build_respond_prompt(self, turn: Turn, instruction: str, fewshot: FewShot) -> str:
        return self.templates["respond"].format(
            task=turn.task_text,
            solution=turn.solution.text,
            instruction=instruction,
            examples=prompts.examples_section(fewshot, "Instruction", "Resulting code"),
        )

    def propose_instruction(self, turn: Turn, fewshot: FewShot) -> str:
        return self.chat(self.templates["instructor_system"], self.build_instruct_prompt(turn, fewshot)).strip()

    def respond_solution(self, turn: Turn, instruction: str, fewshot: FewShot) -> Files:
        reply = self.chat(self.templates["responder_system"], self.build_respond_prompt(turn, instruction, fewshot))
        return parse_reply(reply)

    def pseudo_instruction(self, task_id: str, task_text: str, source: Solution, target: Solution) -> str:
        user = self.templates["pseudo"].format(task=task_text, source=source.text, target=target.text)
        return self.chat(self.templates["instructor_system"], user).strip()
