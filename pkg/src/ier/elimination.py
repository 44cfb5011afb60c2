"""Experience elimination: information-gain filtering and usage-frequency fractile filtering.

Solution quality is ``omega = sim(solution, task) * sim(solution, terminal) * compiles``
with cosines clamped to [0, 1]. A shortcut's gain is ``omega(target) - omega(source)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .backends.embedders import cosine
from .chain import ExecutionChain, Solution
from .errors import InvalidArgument, InvalidState
from .pool import ExperiencePool, ExperienceRecord

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.95
DEFAULT_THETA = 0.95


class EliminationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolutionScore:
    omega: float
    sim_task: float
    sim_terminal: float
    compiles: int


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _compiles(compiler, solution: Solution) -> bool:
    if solution.compiled is not None:
        return solution.compiled
    if not solution.files:
        ok = False
    elif callable(compiler):
        ok = bool(compiler(solution.files))
    else:
        ok = bool(compiler.compiles(solution.files))
    solution.compiled = ok
    return ok


def solution_score(solution: Solution, task_text: str, terminal: Solution, embedder, compiler) -> SolutionScore:
    """Score one solution. ``compiler`` is a Sandbox or any ``files -> bool`` callable."""
    compiles = 1 if _compiles(compiler, solution) else 0
    vec = embedder.embed(solution.text)
    sim_task = _clamp01(cosine(vec, embedder.embed(task_text)))
    if terminal is solution or terminal.files == solution.files:
        sim_terminal = 1.0
    else:
        sim_terminal = _clamp01(cosine(vec, embedder.embed(terminal.text)))
    return SolutionScore(sim_task * sim_terminal * compiles, sim_task, sim_terminal, compiles)


def score_chain(chain: ExecutionChain, embedder, compiler) -> list[SolutionScore]:
    terminal = chain.terminal
    return [solution_score(s, chain.task_text, terminal, embedder, compiler) for s in chain.nodes]


def gain_filter(shortcuts: Sequence, epsilon: float) -> list:
    """Keep shortcuts whose gain is at least ``epsilon``. Order is preserved."""
    kept = []
    for sc in shortcuts:
        if sc.gain is None:
            raise InvalidState(f"shortcut {sc.provenance} has not been scored")
        if sc.gain >= epsilon:
            kept.append(sc)
    return kept


def gain_filter_records(records: Iterable[ExperienceRecord], epsilon: float) -> list[ExperienceRecord]:
    return [r for r in records if r.gain >= epsilon]


def frequency_order(records: Iterable[ExperienceRecord], freqs: Mapping[str, int] | None = None) -> list[ExperienceRecord]:
    def f(r: ExperienceRecord) -> int:
        return r.freq if freqs is None else freqs.get(r.id, 0)

    return sorted(records, key=lambda r: (-f(r), r.created_ord, r.id))


def frequency_filter(
    records: ExperiencePool | Iterable[ExperienceRecord],
    theta: float,
    freqs: Mapping[str, int] | None = None,
) -> list[ExperienceRecord]:
    """Head of the descending-frequency order whose cumulative share stays within ``theta``.

    The record at rank r is kept iff (sum of the top r frequencies) / total <= theta.
    ``freqs`` overrides the records' own counters (e.g. a per-batch delta).
    The comparison is exact (rational), so boundary cases are not at the mercy of rounding.
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidArgument(f"theta must lie in [0, 1], got {theta}")
    recs = records.records() if isinstance(records, ExperiencePool) else list(records)
    ordered = frequency_order(recs, freqs)

    def f(r: ExperienceRecord) -> int:
        return r.freq if freqs is None else freqs.get(r.id, 0)

    total = sum(f(r) for r in ordered)
    if total <= 0:
        warnings.warn("all retrieval frequencies are zero; frequency filter keeps nothing", EliminationWarning, stacklevel=2)
        return []
    # theta is read as the decimal the user typed: 0.95 means 19/20, not the nearest binary float
    bound = Fraction(repr(float(theta))) * total
    kept = []
    running = 0
    for r in ordered:
        running += f(r)
        if running > bound:
            break
        kept.append(r)
    return kept


def combine(gain_kept: Iterable[ExperienceRecord], freq_kept: Iterable[ExperienceRecord]) -> list[ExperienceRecord]:
    """Union by id; the first occurrence wins. Result is sorted by insertion ordinal."""
    out: dict[str, ExperienceRecord] = {}
    for r in list(gain_kept) + list(freq_kept):
        out.setdefault(r.id, r)
    return sorted(out.values(), key=lambda r: (r.created_ord, r.id))


@dataclass(frozen=True)
class EliminationResult:
    kept: list[ExperienceRecord]
    original: int
    gain_kept: int
    freq_kept: int

    @property
    def retained(self) -> int:
        return len(self.kept)

    @property
    def retained_fraction(self) -> float:
        return retained_fraction(self.retained, self.original)


def retained_fraction(retained: int, original: int) -> float:
    if original <= 0:
        return 0.0
    return retained / original


def eliminate_pool(
    pool: ExperiencePool,
    epsilon: float,
    theta: float,
    freqs: Mapping[str, int] | None = None,
) -> EliminationResult:
    """Offline elimination of a saved pool: gain filter, union frequency filter when counts are known.

    ``freqs=None`` means no frequency snapshot is available and only the gain filter runs.
    """
    recs = pool.records()
    gained = gain_filter_records(recs, epsilon)
    if freqs is None:
        fq: list[ExperienceRecord] = []
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EliminationWarning)
            fq = frequency_filter(recs, theta, freqs)
    return EliminationResult(combine(gained, fq), len(recs), len(gained), len(fq))
