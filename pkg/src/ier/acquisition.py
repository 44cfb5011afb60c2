"""Shortcut mining: pseudo-instructions for every non-adjacent node pair of a chain."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .chain import ExecutionChain, Instruction, Solution, nonadjacent_pairs
from .elimination import score_chain
from .errors import BackendError, BackendUnavailable, InvalidArgument
from .pool import I2S, S2I, ExperienceRecord


@dataclass
class Shortcut:
    source: Solution
    pseudo_instruction: Instruction
    target: Solution
    batch_id: int
    task_id: str
    gain: float | None = None

    def __post_init__(self) -> None:
        if self.target.index < self.source.index + 2:
            raise InvalidArgument(f"shortcut {self.source.index}->{self.target.index} joins adjacent nodes")
        if not self.pseudo_instruction.pseudo:
            raise InvalidArgument("shortcut instruction must be a pseudo instruction")

    @property
    def provenance(self) -> tuple[int, str, int, int]:
        return (self.batch_id, self.task_id, self.source.index, self.target.index)


def generate_pseudo_instruction(agent, source: Solution, target: Solution, task_text: str) -> Instruction:
    if source.task_id != target.task_id or source.index >= target.index:
        raise InvalidArgument("source must precede target within the same chain")
    text = agent.pseudo_instruction(source.task_id, task_text, source, target)
    if not isinstance(text, str) or not text.strip():
        raise BackendError("backend returned an empty pseudo instruction", raw=repr(text))
    return Instruction(
        text.strip(), target.index, pseudo=True, phase="pseudo",
        id=f"{source.task_id}/p{source.index}-{target.index}",
    )


def extract_shortcuts(chain: ExecutionChain, agent, batch_id: int = 0) -> list[Shortcut]:
    """One shortcut per non-adjacent pair, in lexicographic pair order.

    Any backend failure discards the whole chain's output.
    """
    out = []
    for i, j in nonadjacent_pairs(chain):
        src, tgt = chain.nodes[i], chain.nodes[j]
        instr = generate_pseudo_instruction(agent, src, tgt, chain.task_text)
        out.append(Shortcut(src, instr, tgt, batch_id, chain.task_id))
    return out


def split_shortcut(shortcut: Shortcut, embedder, created_ord: int = 0) -> tuple[ExperienceRecord, ExperienceRecord]:
    """Project a shortcut into its solution->instruction and instruction->solution records."""
    instr = shortcut.pseudo_instruction.text
    source_text = shortcut.source.text
    gain = 0.0 if shortcut.gain is None else shortcut.gain
    common = dict(gain=gain, origin_batch=shortcut.batch_id, origin_task=shortcut.task_id)
    s2i = ExperienceRecord(S2I, source_text, instr, embedder.embed(source_text), created_ord=created_ord, **common)
    i2s = ExperienceRecord(I2S, instr, shortcut.target.text, embedder.embed(instr), created_ord=created_ord + 1, **common)
    return s2i, i2s


def assign_gains(shortcuts: Sequence[Shortcut], chain: ExecutionChain, embedder, compiler) -> None:
    if not shortcuts:
        return
    scores = score_chain(chain, embedder, compiler)
    for sc in shortcuts:
        sc.gain = scores[sc.target.index].omega - scores[sc.source.index].omega


@dataclass
class Acquisition:
    shortcuts: list[Shortcut]
    records: list[ExperienceRecord]
    failed_tasks: list[str]


def acquire(
    chains: Sequence[ExecutionChain],
    agent,
    embedder,
    compiler,
    batch_id: int,
    first_ord: int = 0,
    workers: int = 1,
) -> Acquisition:
    """Mine, score and split shortcuts for a finished batch.

    Chains whose extraction fails are skipped (and reported); records are numbered
    from ``first_ord`` in chain order, two ordinals per shortcut.
    """

    def mine(chain: ExecutionChain) -> list[Shortcut] | BackendError:
        try:
            found = extract_shortcuts(chain, agent, batch_id)
        except BackendUnavailable:
            raise
        except BackendError as exc:
            return exc
        assign_gains(found, chain, embedder, compiler)
        return found

    if workers > 1 and len(chains) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            mined = list(ex.map(mine, chains))
    else:
        mined = [mine(c) for c in chains]

    shortcuts: list[Shortcut] = []
    failed: list[str] = []
    for chain, result in zip(chains, mined):
        if isinstance(result, BackendError):
            failed.append(chain.task_id)
        else:
            shortcuts.extend(result)
    records: list[ExperienceRecord] = []
    ord_ = first_ord
    for sc in shortcuts:
        records.extend(split_shortcut(sc, embedder, ord_))
        ord_ += 2
    return Acquisition(shortcuts, records, failed)
