from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ier.backends import HashingEmbedder, Sandbox, ScriptedAgent
from ier.chain import Instruction, Solution, append_step, new_chain

FIXTURES = Path(__file__).parent / "fixtures"


class TableEmbedder:
    """Test double: returns hand-picked vectors for known texts."""

    def __init__(self, table: dict[str, list[float]]):
        self.table = {k: np.asarray(v, dtype=float) / np.linalg.norm(v) for k, v in table.items()}
        self.dim = len(next(iter(table.values())))

    def embed(self, text: str) -> np.ndarray:
        return self.table[text]


class EchoAgent:
    """Pseudo instructions derived from the pair, for chains built in tests."""

    def __init__(self):
        self.calls = 0

    def pseudo_instruction(self, task_id, task_text, source, target):
        self.calls += 1
        return f"go from step {source.index} to step {target.index} of {task_id}"


def build_chain(n_nodes: int, task_id: str = "t1", task_text: str = "calc app"):
    chain = new_chain(task_id, task_text)
    for k in range(1, n_nodes):
        append_step(
            chain,
            Instruction(f"instruction {k}", k, phase="review", id=f"{task_id}/i{k}"),
            Solution(task_id, k, (("main.py", f"print({k})  # step {k} of {task_text}\n"),)),
        )
    return chain


@pytest.fixture
def embedder():
    return HashingEmbedder(dim=256, seed=0)


@pytest.fixture(scope="session")
def sandbox():
    return Sandbox(run_timeout=10.0)


@pytest.fixture
def scripted_agent():
    return ScriptedAgent.from_jsonl(FIXTURES / "scripted.jsonl")


@pytest.fixture
def metrics_corpus():
    with open(FIXTURES / "metrics_corpus.jsonl") as f:
        rows = [json.loads(line) for line in f]
    for r in rows:
        r["files"] = tuple((x["path"], x["content"]) for x in r["files"])
    return rows


def synthetic_run_inputs(out_dir, n_tasks=12, n_categories=3, n_batches=3, seed=0, **cfg):
    """Corpus, fixtures, batches, agent and config for a scripted run."""
    import warnings

    from ier import synthetic
    from ier.config import RunConfig
    from ier.propagation import load_corpus, partition_tasks

    corpus, fixtures = synthetic.write(out_dir, n_tasks, n_categories, seed)
    config = RunConfig(n_batches=n_batches, seed=seed, corpus=str(corpus), **cfg)
    config.backend.fixtures = str(fixtures)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        batches = partition_tasks(load_corpus(corpus), n_batches, seed)
    return batches, ScriptedAgent.from_jsonl(fixtures), config.validate()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
