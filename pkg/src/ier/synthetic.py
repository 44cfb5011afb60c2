"""Synthetic task corpus and matching scripted-agent fixtures.

Every task gets a small, deterministic development story: a first draft with
placeholder markers, a few review passes that fill features in, and sometimes a
broken build that the testing phase repairs. The fixtures replay that story
under the given round caps, including pseudo instructions for every
non-adjacent solution pair of the resulting chain.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .backends.agents import STOP_MARKER, render_files
from .chain import Files, make_files, nonadjacent_pairs

CATEGORIES = [
    "Education", "Games", "Finance", "Health", "Music", "Travel", "Weather", "Shopping",
    "Productivity", "Social", "Sports", "Cooking", "Science", "Art", "News", "Photography",
    "Fitness", "Language", "Security", "Utilities", "Transport", "Gardening", "Pets", "Books",
    "Movies", "Events", "Housing", "Calendar", "Chat", "Maps", "Inventory", "Budget",
    "Quiz", "Puzzle", "Timer", "Notes", "Drawing", "Survey", "Recipes", "Habits",
]

_NOUNS = ["tracker", "planner", "manager", "calculator", "organizer", "simulator", "helper", "journal"]
_FEATURES = [
    "adds new entries", "lists saved entries", "computes a weekly summary", "searches by keyword",
    "sorts items by score", "exports a text report", "validates user input", "tracks daily progress",
    "reminds about deadlines", "groups items by tag", "shows simple statistics", "removes old entries",
]


@dataclass
class _Step:
    phase: str
    round: int
    instruction: str
    files: Files | None  # None marks the stop turn


def _fn_name(feature: str) -> str:
    return "_".join(feature.split()[:2])


def _program(task_text: str, done: list[str], pending: list[str], broken: str | None, todo_left: bool) -> Files:
    lines = [f'"""{task_text}"""', ""]
    for feat in done:
        name = _fn_name(feat)
        lines += [f"def {name}(items):", f'    """{feat}"""', "    return sorted(items)", ""]
    for feat in pending:
        lines += [f"# TODO: {feat}", ""]
    if todo_left and not pending:
        lines += ["# TODO: polish the interface", ""]
    lines += ["def main():", "    items = [3, 1, 2]"]
    for feat in done:
        lines.append(f"    print({_fn_name(feat)!r}, {_fn_name(feat)}(items))")
    if broken == "syntax":
        lines.append("    print('unbalanced'")
    elif broken == "runtime":
        lines.append("    raise SystemExit(1)")
    lines.append("    return 0")
    lines += ["", "", 'if __name__ == "__main__":', "    main()", ""]
    main_py = "\n".join(lines)
    helper = f'"""Helpers for: {task_text}"""\n\n\ndef describe():\n    return {len(done)}\n'
    return make_files([("main.py", main_py), ("helpers.py", helper)])


def _story(task_id: str, task_text: str, features: list[str], rng: random.Random,
           max_review: int, max_test: int) -> list[_Step]:
    n_reviews = rng.randint(0, max_review)
    broken = rng.choice([None, None, "syntax", "runtime"])
    todo_left = rng.random() < 0.25
    # failed fix attempts before the build works; max_test+1 means never fixed
    stubborn = rng.choices([0, 1, max_test + 1], weights=[7, 2, 1])[0]
    first = rng.randint(1, 3)
    done = features[:first]
    pending = features[first:]
    steps = [_Step("coding", 1, f"Write the first version of the program: {task_text}",
                   _program(task_text, done, pending, None, False))]
    for r in range(1, n_reviews + 1):
        feat = pending[0] if pending else None
        if feat:
            done, pending = done + [feat], pending[1:]
            instr = f"Implement the missing feature that {feat} and call it from main."
        else:
            instr = "Tidy the main function and keep the printed output stable."
        # the last review may introduce the build problem testing has to fix
        brk = broken if r == n_reviews else None
        steps.append(_Step("review", r, instr, _program(task_text, done, pending, brk, todo_left)))
    if n_reviews < max_review:
        steps.append(_Step("review", n_reviews + 1, STOP_MARKER, None))
    if n_reviews == 0 and broken:
        broken = None
    current_broken = broken
    for r in range(1, max_test + 1):
        if current_broken is None:
            break
        kind = "syntax error" if current_broken == "syntax" else "non-zero exit"
        still = "runtime" if r <= stubborn else None
        steps.append(_Step("test", r, f"Fix the {kind} reported by the test run so main.py runs cleanly.",
                           _program(task_text, done, pending, still, todo_left)))
        current_broken = still
    return steps


def make_task(task_id: str, category: str, rng: random.Random) -> tuple[dict, list[str]]:
    noun = rng.choice(_NOUNS)
    feats = rng.sample(_FEATURES, 4)
    text = (f"Develop a {category.lower()} {noun} application that {feats[0]}, {feats[1]}, "
            f"{feats[2]} and {feats[3]}.")
    return {"task_id": task_id, "category": category, "task_text": text}, feats


def generate(n_tasks: int, n_categories: int, seed: int = 0, max_review: int = 3, max_test: int = 3):
    """Return ``(corpus_records, fixture_records)``."""
    if not 1 <= n_categories <= len(CATEGORIES):
        raise ValueError(f"n_categories must be within 1..{len(CATEGORIES)}")
    rng = random.Random(seed)
    corpus, fixtures = [], []
    for n in range(n_tasks):
        cat = CATEGORIES[n % n_categories]
        tid = f"t{n:04d}"
        rec, feats = make_task(tid, cat, rng)
        corpus.append(rec)
        steps = _story(tid, rec["task_text"], feats, rng, max_review, max_test)
        nodes: list[Files] = [()]
        instrs: list[str] = []
        for st in steps:
            entry = {"task_id": tid, "phase": st.phase, "round": st.round, "instruction": st.instruction}
            if st.files is not None:
                entry["solution"] = render_files(st.files)
                nodes.append(st.files)
                instrs.append(st.instruction)
            fixtures.append(entry)
        for i, j in nonadjacent_pairs(len(nodes)):
            start = "an empty project" if i == 0 else f"version {i}"
            text = f"Starting from {start}: " + " Then ".join(instrs[i:j])
            fixtures.append({"task_id": tid, "phase": "pseudo", "round": [i, j], "instruction": text})
    return corpus, fixtures


def write(out_dir: str | Path, n_tasks: int, n_categories: int, seed: int = 0,
          max_review: int = 3, max_test: int = 3) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus, fixtures = generate(n_tasks, n_categories, seed, max_review, max_test)
    corpus_path, fixture_path = out / "corpus.jsonl", out / "fixtures.jsonl"
    for path, rows in ((corpus_path, corpus), (fixture_path, fixtures)):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for row in rows:
                f.write(json.dumps(row, ensure_ascii=False) + "\n")
    return corpus_path, fixture_path
