"""Software-quality metrics and propagation analysis measures."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .backends.embedders import cosine
from .chain import ExecutionChain, Files, flatten_files
from .errors import InvalidArgument, InvalidState, UndefinedMetric

TODO_TOKEN = "TODO"


def has_todo(files: Files) -> bool:
    return any(TODO_TOKEN in content for _, content in files)


def completeness(artifacts: Sequence[Files]) -> float:
    """Share of artifacts in which no file contains the case-sensitive token ``TODO``."""
    if not artifacts:
        raise UndefinedMetric("completeness of an empty corpus")
    return sum(1 for a in artifacts if not has_todo(a)) / len(artifacts)


def executability(artifacts: Sequence[Files], runner) -> float:
    """Share of artifacts that compile and then run to a zero exit within the runner's timeout."""
    if not artifacts:
        raise UndefinedMetric("executability of an empty corpus")
    ok = 0
    for a in artifacts:
        outcome = runner.compile_and_run(a)
        ok += 1 if (outcome.compiled and outcome.executed) else 0
    return ok / len(artifacts)


def consistency(pairs: Sequence[tuple[str, Files]], embedder) -> float:
    """Mean clamped cosine between each requirement and its flattened artifact."""
    if not pairs:
        raise UndefinedMetric("consistency of an empty corpus")
    sims = []
    for requirement, files in pairs:
        c = cosine(embedder.embed(requirement), embedder.embed(flatten_files(files)))
        sims.append(min(1.0, max(0.0, c)))
    return math.fsum(sims) / len(sims)


def quality(alpha: float, beta: float, gamma: float) -> float:
    for name, v in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
        if not 0.0 <= v <= 1.0:
            raise InvalidArgument(f"{name}={v} outside [0, 1]")
    return alpha * beta * gamma


@dataclass(frozen=True)
class PhaseEfficiency:
    review: float
    test: float
    overall: float


def _eff(cap: int, actual: int) -> float:
    if cap <= 0:
        return 0.0
    return (cap - actual) / cap


def phase_efficiency(chain: ExecutionChain | tuple[int, int], max_review: int, max_test: int) -> PhaseEfficiency:
    """Unused share of the round budget, per phase and over review+test together.

    ``chain`` may be a chain (rounds counted from edge phases) or a
    ``(review_rounds, test_rounds)`` pair.
    """
    if isinstance(chain, tuple):
        review, test = chain
    else:
        counts = chain.phase_rounds()
        review, test = counts.get("review", 0), counts.get("test", 0)
    if review > max_review or test > max_test:
        raise InvalidArgument(f"actual rounds ({review}, {test}) exceed caps ({max_review}, {max_test})")
    return PhaseEfficiency(
        _eff(max_review, review),
        _eff(max_test, test),
        _eff(max_review + max_test, review + test),
    )


def utilization_matrix(hits: Iterable[tuple[int, int]], n_batches: int) -> list[list[float]]:
    """Row i (consumer batch i, 1-based) holds the share of its hits produced by each batch j.

    ``hits`` yields ``(consuming_batch, origin_batch)`` pairs, one per returned record.
    Rows without hits stay all-zero.
    """
    counts = [[0] * n_batches for _ in range(n_batches)]
    for consumer, origin in hits:
        if not 1 <= consumer <= n_batches or not 1 <= origin <= n_batches:
            raise InvalidArgument(f"hit ({consumer}, {origin}) outside 1..{n_batches}")
        if origin >= consumer:
            raise InvalidState(f"batch {consumer} retrieved an experience from batch {origin}")
        counts[consumer - 1][origin - 1] += 1
    matrix = []
    for row in counts:
        total = sum(row)
        matrix.append([c / total if total else 0.0 for c in row])
    return matrix


@dataclass
class MetricBundle:
    n_tasks: int
    completeness: float
    executability: float
    consistency: float
    quality: float
    mean_duration_seconds: float
    mean_review_rounds: float
    mean_test_rounds: float
    review_efficiency: float
    test_efficiency: float
    overall_efficiency: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricBundle":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def batch_metrics(
    chains: Sequence[ExecutionChain],
    runner,
    embedder,
    durations: Sequence[float],
    max_review: int,
    max_test: int,
) -> MetricBundle:
    if not chains:
        raise UndefinedMetric("no chains to evaluate")
    finals = [c.terminal.files for c in chains]
    a = completeness(finals)
    b = executability(finals, runner)
    g = consistency([(c.task_text, c.terminal.files) for c in chains], embedder)
    effs = [phase_efficiency(c, max_review, max_test) for c in chains]
    rounds = [c.phase_rounds() for c in chains]
    return MetricBundle(
        n_tasks=len(chains),
        completeness=a,
        executability=b,
        consistency=g,
        quality=quality(a, b, g),
        mean_duration_seconds=statistics.fmean(durations) if durations else 0.0,
        mean_review_rounds=statistics.fmean(r.get("review", 0) for r in rounds),
        mean_test_rounds=statistics.fmean(r.get("test", 0) for r in rounds),
        review_efficiency=statistics.fmean(e.review for e in effs),
        test_efficiency=statistics.fmean(e.test for e in effs),
        overall_efficiency=statistics.fmean(e.overall for e in effs),
    )
