"""Batch partitioning, per-task agent loops and the three pool propagation schedules.

Schedules, with ``acq[i]`` the experiences mined from batch ``i``:

* successive: batch ``i`` consults ``acq[i-1]``
* cumulative: batch ``i`` consults the union of ``acq[1..i-1]``
* eliminated: batch 2 consults the gain-filtered ``acq[1]``; batch ``i >= 3`` consults
  gain-filtered ``acq[i-1]`` united with the frequency-filtered pool that batch ``i-1`` consulted.

Batch 1 always starts with nothing. Pools are only written between batches.
"""

from __future__ import annotations

import json
import logging
import random
import time
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import runstore
from .acquisition import acquire
from .backends.agents import Turn, is_stop
from .chain import ExecutionChain, Instruction, Solution, append_step, new_chain
from .config import RunConfig
from .elimination import EliminationWarning, frequency_filter, gain_filter_records, combine, retained_fraction
from .errors import BackendError, BackendUnavailable, ConfigurationError, InvalidArgument, ParseError, RunInterrupted
from .metrics import MetricBundle, batch_metrics
from .pool import I2S, S2I, ExperiencePool, merge

log = logging.getLogger(__name__)


# --- tasks and batches ---------------------------------------------------------


@dataclass(frozen=True)
class Task:
    task_id: str
    category: str
    text: str


@dataclass
class TaskBatch:
    ordinal: int
    tasks: list[Task]


class StratificationWarning(UserWarning):
    pass


def load_corpus(path: str | Path) -> list[Task]:
    tasks: list[Task] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=lineno) from exc
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", path=str(path), line=lineno)
            for key in ("task_id", "category", "task_text"):
                if key not in rec or rec[key] in (None, ""):
                    raise ParseError(f"missing field {key!r}", path=str(path), line=lineno)
            tid = str(rec["task_id"])
            if tid in seen:
                raise ParseError(f"duplicate task_id {tid!r}", path=str(path), line=lineno)
            seen.add(tid)
            tasks.append(Task(tid, str(rec["category"]), str(rec["task_text"])))
    return tasks


def partition_tasks(tasks: Sequence[Task], n_batches: int, seed: int) -> list[TaskBatch]:
    """Stratified, seeded split into ``n_batches`` disjoint batches.

    Each category is shuffled (seeded) and dealt round-robin; the dealing position
    carries over between categories so batch sizes also differ by at most one.
    """
    if n_batches < 1:
        raise InvalidArgument("n_batches must be >= 1")
    by_cat: dict[str, list[Task]] = defaultdict(list)
    for t in tasks:
        if not t.category:
            raise InvalidArgument(f"task {t.task_id} has no category")
        by_cat[t.category].append(t)
    rng = random.Random(seed)
    batches: list[list[Task]] = [[] for _ in range(n_batches)]
    cursor = 0
    short = []
    for cat in sorted(by_cat):
        members = sorted(by_cat[cat], key=lambda t: t.task_id)
        if len(members) < n_batches:
            short.append(cat)
        rng.shuffle(members)
        for t in members:
            batches[cursor % n_batches].append(t)
            cursor += 1
    if short:
        warnings.warn(
            f"{len(short)} categories have fewer tasks than batches: {short[:5]}",
            StratificationWarning, stacklevel=2,
        )
    return [TaskBatch(i + 1, b) for i, b in enumerate(batches)]


def batch_manifest(batches: Sequence[TaskBatch]) -> dict[str, int]:
    return {t.task_id: b.ordinal for b in batches for t in b.tasks}


# --- one task ------------------------------------------------------------------


@dataclass
class TaskRun:
    chain: ExecutionChain
    retrievals: list[dict]
    duration: float
    agent_calls: int
    error: str | None = None


def _fewshot(pool: ExperiencePool | None, kind: str, query: str, k: int, log_to: list[dict], ctx: dict):
    if pool is None or not pool.size(kind):
        return []
    hits = pool.retrieve(kind, query, k)
    for h in hits:
        log_to.append({**ctx, "kind": kind, "record_id": h.record.id, "origin_batch": h.record.origin_batch,
                       "score": round(h.score, 12)})
    return [(h.record.key_text, h.record.value_text) for h in hits]


def run_task(
    task: Task,
    active_pool: ExperiencePool | None,
    agent,
    sandbox,
    config: RunConfig,
    batch: int = 1,
) -> TaskRun:
    """Coding (1 round), review (up to the cap, until the instructor stops), testing
    (until the software compiles and runs, or the cap).

    Every round retrieves few-shot examples twice: solution->instruction for the
    instructor, instruction->solution for the responder.
    """
    chain = new_chain(task.task_id, task.text)
    retrievals: list[dict] = []
    calls = 0
    started = time.perf_counter()

    def step(phase: str, rnd: int, feedback: str = "") -> bool:
        nonlocal calls
        current = chain.terminal
        ctx = {"batch": batch, "task_id": task.task_id, "phase": phase, "round": rnd}
        turn = Turn(task.task_id, task.text, phase, rnd, current, feedback)
        shots = _fewshot(active_pool, S2I, current.text, config.k, retrievals, ctx)
        instruction = agent.propose_instruction(turn, shots)
        calls += 1
        if phase != "coding" and is_stop(instruction):
            return False
        shots = _fewshot(active_pool, I2S, instruction, config.k, retrievals, ctx)
        files = agent.respond_solution(turn, instruction, shots)
        calls += 1
        k = len(chain.edges) + 1
        append_step(
            chain,
            Instruction(instruction, k, pseudo=False, phase=phase, id=f"{task.task_id}/i{k}"),
            Solution(task.task_id, len(chain.nodes), files),
        )
        return True

    error = None
    try:
        step("coding", 1)
        for r in range(1, config.max_review_rounds + 1):
            if not step("review", r):
                break
        for r in range(1, config.max_test_rounds + 1):
            outcome = sandbox.compile_and_run(chain.terminal.files)
            chain.terminal.compiled = outcome.compiled
            if outcome.compiled and outcome.executed:
                break
            if not step("test", r, outcome.log):
                break
    except BackendUnavailable:
        raise
    except BackendError as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("task %s aborted after %d steps: %s", task.task_id, len(chain.edges), error)
    elapsed = time.perf_counter() - started
    duration = float(calls) if config.effective_clock == "logical" else elapsed
    return TaskRun(chain, retrievals, duration, calls, error)


# --- batches -------------------------------------------------------------------


@dataclass
class BatchResult:
    ordinal: int
    chains: list[ExecutionChain]
    acquired: ExperiencePool
    active: ExperiencePool
    metrics: MetricBundle | None
    hit_ratio: float | None
    retrieval_log: list[dict]
    durations: list[float]
    failed_tasks: list[str] = field(default_factory=list)
    elimination: dict | None = None

    def summary(self) -> dict:
        return {
            "batch": self.ordinal,
            "n_tasks": len(self.chains),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "hit_ratio": self.hit_ratio,
            "retrieval_hits": len(self.retrieval_log),
            "active_pool_size": len(self.active),
            "active_origin_batches": sorted(self.active.origin_batches()),
            "acquired_pool_size": len(self.acquired),
            "failed_tasks": self.failed_tasks,
            "elimination": self.elimination,
        }


class Runner:
    """Executes batches in order under one schedule, checkpointing after each batch."""

    def __init__(self, config: RunConfig, agent, embedder, sandbox, run_dir: str | Path | None = None,
                 resume: bool = False):
        self.config = config.validate()
        self.agent = agent
        self.embedder = embedder
        self.sandbox = sandbox
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.resume = resume
        self.results: list[BatchResult] = []
        self._next_ord = 0

    # -- pool wiring --

    def _empty(self) -> ExperiencePool:
        return ExperiencePool(self.embedder.dim, self.embedder)

    def active_pool_for(self, i: int) -> tuple[ExperiencePool, dict | None]:
        """Build the pool batch ``i`` consults from the results of batches ``< i``."""
        pattern = self.config.pattern
        prev = self.results
        if i == 1:
            return self._empty(), ({"original": 0, "retained": 0, "retained_fraction": 0.0}
                                   if pattern == "eliminated" else None)
        if pattern == "successive":
            return prev[i - 2].acquired.copy(reset_freq=True), None
        if pattern == "cumulative":
            return merge([r.acquired for r in prev[: i - 1]], self.embedder).copy(reset_freq=True), None
        # eliminated
        gain_kept = gain_filter_records(prev[i - 2].acquired.records(), self.config.epsilon)
        freq_kept = []
        freq_candidates = 0
        if i >= 3:
            consulted = prev[i - 2].active
            freq_candidates = len(consulted)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EliminationWarning)
                freq_kept = frequency_filter(consulted, self.config.theta)
        kept = combine(gain_kept, freq_kept)
        pool = ExperiencePool(self.embedder.dim, self.embedder, (r.copy(freq=0) for r in kept))
        cumulative = len(merge([r.acquired for r in prev[: i - 1]]))
        accounting = {
            "gain_candidates": len(prev[i - 2].acquired),
            "gain_kept": len(gain_kept),
            "freq_candidates": freq_candidates,
            "freq_kept": len(freq_kept),
            "original": cumulative,
            "retained": len(pool),
            "retained_fraction": retained_fraction(len(pool), cumulative),
        }
        return pool, accounting

    # -- execution --

    def run_batch(self, batch: TaskBatch) -> BatchResult:
        i = batch.ordinal
        active, accounting = self.active_pool_for(i)
        if self.config.workers > 1 and len(batch.tasks) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as ex:
                runs = list(ex.map(lambda t: run_task(t, active, self.agent, self.sandbox, self.config, i), batch.tasks))
        else:
            runs = [run_task(t, active, self.agent, self.sandbox, self.config, i) for t in batch.tasks]
        chains = [r.chain for r in runs]
        failed = [r.chain.task_id for r in runs if r.error]
        acq = acquire(chains, self.agent, self.embedder, self.sandbox, i, self._next_ord, self.config.workers)
        self._next_ord += len(acq.records)
        acquired = ExperiencePool(self.embedder.dim, self.embedder, acq.records)
        durations = [r.duration for r in runs]
        metrics = None
        if chains:
            metrics = batch_metrics(chains, self.sandbox, self.embedder, durations,
                                    self.config.max_review_rounds, self.config.max_test_rounds)
        retrievals = [entry for r in runs for entry in r.retrievals]
        return BatchResult(
            ordinal=i,
            chains=chains,
            acquired=acquired,
            active=active,
            metrics=metrics,
            # nothing to retrieve from counts as nothing retrieved
            hit_ratio=active.hit_ratio() if len(active) else 0.0,
            retrieval_log=retrievals,
            durations=durations,
            failed_tasks=sorted(set(failed) | set(acq.failed_tasks)),
            elimination=accounting,
        )

    def run(self, batches: Sequence[TaskBatch]) -> list[BatchResult]:
        if [b.ordinal for b in batches] != list(range(1, len(batches) + 1)):
            raise InvalidArgument("batches must be numbered 1..n in order")
        lock = None
        if self.run_dir is not None:
            lock = runstore.acquire_lock(self.run_dir)
        try:
            if self.run_dir is not None:
                runstore.prepare(self.run_dir, self.config, batches, resume=self.resume)
            self.results = []
            for batch in batches:
                done = self._load_checkpoint(batch.ordinal) if self.run_dir is not None else None
                if done is not None:
                    log.info("batch %d restored from checkpoint", batch.ordinal)
                    self.results.append(done)
                    self._next_ord = max([self._next_ord] + [r.created_ord + 1 for r in done.acquired])
                    continue
                log.info("batch %d: %d tasks (%s)", batch.ordinal, len(batch.tasks), self.config.pattern)
                try:
                    result = self.run_batch(batch)
                except BackendUnavailable as exc:
                    raise RunInterrupted(f"batch {batch.ordinal} interrupted: {exc}") from exc
                self.results.append(result)
                if self.run_dir is not None:
                    runstore.write_batch(self.run_dir, result, self.config.pattern)
            return self.results
        finally:
            if lock is not None:
                runstore.release_lock(lock)

    def _load_checkpoint(self, i: int) -> BatchResult | None:
        if not self.resume:
            return None
        return runstore.read_batch(self.run_dir, i, self.embedder)


def run_successive(batches, agent, embedder, sandbox, config: RunConfig, run_dir=None, resume=False):
    return _run_pattern("successive", batches, agent, embedder, sandbox, config, run_dir, resume)


def run_cumulative(batches, agent, embedder, sandbox, config: RunConfig, run_dir=None, resume=False):
    return _run_pattern("cumulative", batches, agent, embedder, sandbox, config, run_dir, resume)


def run_eliminated(batches, agent, embedder, sandbox, config: RunConfig, run_dir=None, resume=False):
    return _run_pattern("eliminated", batches, agent, embedder, sandbox, config, run_dir, resume)


def _run_pattern(pattern, batches, agent, embedder, sandbox, config, run_dir, resume):
    if config.pattern != pattern:
        raise ConfigurationError(f"config pattern is {config.pattern!r}, expected {pattern!r}")
    return Runner(config, agent, embedder, sandbox, run_dir, resume).run(batches)
