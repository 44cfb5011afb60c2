"""Execution chains: the linear record of one task's instruct/respond rounds.

Node ``k`` is the solution after ``k`` rounds (node 0 is the empty starting
solution); edge ``k`` is the instruction that turned node ``k-1`` into node ``k``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import InvalidArgument, ParseError, SequencingError

Files = tuple[tuple[str, str], ...]

EMPTY_ARTIFACT_TEXT = "<empty solution>"


def make_files(files: Iterable[tuple[str, str]] | dict[str, str]) -> Files:
    items = files.items() if isinstance(files, dict) else files
    # path-sorted so artifact equality ignores the order files were listed in
    out = tuple(sorted((str(p), str(c)) for p, c in items))
    paths = [p for p, _ in out]
    if len(set(paths)) != len(paths):
        raise InvalidArgument(f"duplicate paths in artifact: {paths}")
    return out


def flatten_files(files: Files) -> str:
    """Render an artifact as one text: files in path order, each under a ``### path`` header.

    The empty artifact renders as a fixed placeholder so it can still be embedded.
    """
    if not files:
        return EMPTY_ARTIFACT_TEXT
    parts = []
    for path, content in sorted(files):
        body = content if content.endswith("\n") or not content else content + "\n"
        parts.append(f"### {path}\n{body}")
    return "".join(parts)


def files_digest(files: Files) -> str:
    h = hashlib.sha256()
    for path, content in sorted(files):
        h.update(path.encode("utf-8") + b"\0" + content.encode("utf-8") + b"\0")
    return h.hexdigest()


@dataclass
class Solution:
    task_id: str
    index: int
    files: Files = ()
    # Filled lazily by whoever first runs the compile check.
    compiled: bool | None = None

    @property
    def id(self) -> str:
        return f"{self.task_id}/s{self.index}"

    @property
    def text(self) -> str:
        return flatten_files(self.files)

    @property
    def is_empty(self) -> bool:
        return not self.files


@dataclass(frozen=True)
class Instruction:
    text: str
    index: int
    pseudo: bool = False
    phase: str = ""
    id: str = ""


@dataclass
class ExecutionChain:
    task_id: str
    task_text: str
    nodes: list[Solution] = field(default_factory=list)
    edges: list[Instruction] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def terminal(self) -> Solution:
        return self.nodes[-1]

    def steps(self) -> Iterator[tuple[Solution, Instruction, Solution]]:
        for k, edge in enumerate(self.edges):
            yield self.nodes[k], edge, self.nodes[k + 1]

    def phase_rounds(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.edges:
            counts[e.phase] = counts.get(e.phase, 0) + 1
        return counts


def new_chain(task_id: str, task_text: str) -> ExecutionChain:
    if not task_text or not task_text.strip():
        raise InvalidArgument("task_text must be non-empty")
    return ExecutionChain(task_id, task_text, nodes=[Solution(task_id, 0)], edges=[])


def append_step(chain: ExecutionChain, instruction: Instruction, solution: Solution) -> ExecutionChain:
    if solution.index != len(chain.nodes):
        raise SequencingError(
            f"solution index {solution.index} does not follow chain of {len(chain.nodes)} nodes"
        )
    if instruction.index != len(chain.edges) + 1:
        raise SequencingError(
            f"instruction index {instruction.index} does not follow {len(chain.edges)} edges"
        )
    if solution.task_id != chain.task_id:
        raise SequencingError(f"solution belongs to task {solution.task_id!r}, not {chain.task_id!r}")
    chain.nodes.append(solution)
    chain.edges.append(instruction)
    return chain


def nonadjacent_pairs(chain: ExecutionChain | int) -> list[tuple[int, int]]:
    """All ``(i, j)`` with ``j >= i + 2``, lexicographic. Accepts a chain or a node count."""
    n = chain if isinstance(chain, int) else len(chain.nodes)
    return [(i, j) for i in range(n) for j in range(i + 2, n)]


def reachable(chain: ExecutionChain, i: int, j: int) -> bool:
    n = len(chain.nodes)
    for idx in (i, j):
        if not 0 <= idx < n:
            raise InvalidArgument(f"node index {idx} outside 0..{n - 1}")
    return i < j


# --- chain log (JSON Lines) -------------------------------------------------


def chain_to_dict(chain: ExecutionChain) -> dict:
    nodes = []
    for s in chain.nodes:
        node: dict = {"index": s.index, "files": [{"path": p, "content": c} for p, c in s.files]}
        if s.compiled is not None:
            node["compiled"] = s.compiled
        nodes.append(node)
    return {
        "task_id": chain.task_id,
        "task_text": chain.task_text,
        "nodes": nodes,
        "edges": [
            {"index": e.index, "text": e.text, "pseudo": e.pseudo, "phase": e.phase} for e in chain.edges
        ],
    }


def chain_from_dict(d: dict) -> ExecutionChain:
    task_id = str(d["task_id"])
    chain = ExecutionChain(task_id, d["task_text"])
    for k, node in enumerate(d["nodes"]):
        if node["index"] != k:
            raise SequencingError(f"node {k} carries index {node['index']}")
        files = make_files((f["path"], f["content"]) for f in node["files"])
        chain.nodes.append(Solution(task_id, k, files, node.get("compiled")))
    if not chain.nodes or chain.nodes[0].files:
        raise SequencingError("node 0 must exist and be empty")
    for k, e in enumerate(d["edges"], start=1):
        if e["index"] != k:
            raise SequencingError(f"edge {k} carries index {e['index']}")
        chain.edges.append(
            Instruction(e["text"], k, bool(e.get("pseudo", False)), e.get("phase", ""), f"{task_id}/i{k}")
        )
    if len(chain.edges) != len(chain.nodes) - 1:
        raise SequencingError("chain must have exactly one edge fewer than nodes")
    return chain


def dump_chains(chains: Sequence[ExecutionChain], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in chains:
            f.write(json.dumps(chain_to_dict(c), ensure_ascii=False) + "\n")


def load_chains(path: str | Path) -> list[ExecutionChain]:
    chains = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                chains.append(chain_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, SequencingError, InvalidArgument) as exc:
                raise ParseError(f"bad chain record: {exc}", path=str(path), line=lineno) from exc
    return chains
