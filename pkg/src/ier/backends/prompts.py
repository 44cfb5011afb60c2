"""Default prompt templates for the remote chat backend.

These are our own reconstruction; no canonical wording exists for them. Every
template can be replaced through ``[prompts]`` in the run configuration.
"""

from __future__ import annotations

from typing import Sequence

INSTRUCTOR_SYSTEM = (
    "You are a senior software engineer guiding a programmer through building a Python "
    "application. You give exactly one concrete, actionable instruction per turn. When the "
    "software fully satisfies the requirement and needs no further change, reply with "
    "exactly: <INFO> Finished"
)

RESPONDER_SYSTEM = (
    "You are a programmer. Apply the instruction to the current code and reply with the "
    "complete updated software. Emit every file as a line holding only its relative path, "
    "followed by the file body inside a triple-backtick fence. The entry point is main.py."
)

INSTRUCT_TEMPLATE = """Requirement:
{task}

Phase: {phase} (round {round})

Current code:
{solution}
{feedback}{examples}
Give the next instruction."""

RESPOND_TEMPLATE = """Requirement:
{task}

Current code:
{solution}
{examples}
Instruction:
{instruction}

Reply with the full updated code."""

PSEUDO_TEMPLATE = """Requirement:
{task}

Source code:
{source}

Target code:
{target}

Write one imperative instruction that, given to a programmer holding the source code, \
would make them produce the target code. Reply with the instruction only."""


def examples_section(fewshot: Sequence[tuple[str, str]], key_label: str, value_label: str) -> str:
    if not fewshot:
        return ""
    parts = ["\nExamples from earlier tasks:"]
    for n, (key, value) in enumerate(fewshot, start=1):
        parts.append(f"\n[Example {n}]\n{key_label}:\n{key}\n{value_label}:\n{value}")
    return "\n".join(parts) + "\n"
