"""On-disk layout of a run directory.

    <run>/config.json           resolved configuration (no secrets)
    <run>/batches.json          task_id -> batch ordinal
    <run>/batch-<i>/chains.jsonl
    <run>/batch-<i>/pool.jsonl         experiences mined from batch i
    <run>/batch-<i>/active_pool.jsonl  pool consulted by batch i, with its usage counts
    <run>/batch-<i>/retrievals.jsonl   one line per returned record
    <run>/batch-<i>/metrics.json       written last; its presence marks the batch complete
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Sequence

from .chain import dump_chains, load_chains
from .errors import ConfigurationError, ParseError
from .metrics import MetricBundle
from .pool import load_pool, save_pool

LOCK_NAME = ".lock"


def batch_dir(run_dir: Path, i: int) -> Path:
    return Path(run_dir) / f"batch-{i}"


def write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write("\n")


def read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from exc


def acquire_lock(run_dir: Path) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(f"{run_dir} is locked by another process (remove {lock} if stale)") from None
    with os.fdopen(fd, "w") as f:
        f.write(str(os.getpid()))
    return lock


def release_lock(lock: Path) -> None:
    try:
        lock.unlink()
    except FileNotFoundError:
        pass


def prepare(run_dir: Path, config, batches: Sequence, resume: bool) -> None:
    from .propagation import batch_manifest

    cfg_path = run_dir / "config.json"
    manifest = batch_manifest(batches)
    if cfg_path.exists():
        if not resume:
            if any(run_dir.glob("batch-*/metrics.json")):
                raise ConfigurationError(f"{run_dir} already holds a run; pass --resume or choose another directory")
        else:
            stored = read_json(cfg_path)
            stored.pop("workers", None)
            if stored != json.loads(json.dumps(config.fingerprint())):
                raise ConfigurationError(f"configuration differs from the one stored in {cfg_path}")
            if read_json(run_dir / "batches.json") != manifest:
                raise ConfigurationError("task partition differs from the stored one")
    write_json(cfg_path, config.fingerprint())
    write_json(run_dir / "batches.json", manifest)


def write_batch(run_dir: Path, result, pattern: str) -> None:
    d = batch_dir(run_dir, result.ordinal)
    d.mkdir(parents=True, exist_ok=True)
    dump_chains(result.chains, d / "chains.jsonl")
    save_pool(result.acquired, d / "pool.jsonl")
    save_pool(result.active, d / "active_pool.jsonl")
    with open(d / "retrievals.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for entry in result.retrieval_log:
            f.write(json.dumps(entry, ensure_ascii=False) + "\n")
    summary = {"pattern": pattern, **result.summary(), "durations": result.durations}
    tmp = d / "metrics.json.tmp"
    write_json(tmp, summary)
    os.replace(tmp, d / "metrics.json")


def read_retrievals(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ParseError(exc.msg, path=str(path), line=lineno) from exc
    return out


def read_batch(run_dir: Path, i: int, embedder):
    """Restore a completed batch, or ``None`` if it never finished."""
    from .propagation import BatchResult

    d = batch_dir(run_dir, i)
    if not (d / "metrics.json").exists():
        return None
    summary = read_json(d / "metrics.json")
    return BatchResult(
        ordinal=i,
        chains=load_chains(d / "chains.jsonl"),
        acquired=load_pool(d / "pool.jsonl", embedder),
        active=load_pool(d / "active_pool.jsonl", embedder),
        metrics=None if summary["metrics"] is None else MetricBundle.from_dict(summary["metrics"]),
        hit_ratio=summary["hit_ratio"],
        retrieval_log=read_retrievals(d / "retrievals.jsonl"),
        durations=summary.get("durations", []),
        failed_tasks=summary.get("failed_tasks", []),
        elimination=summary.get("elimination"),
    )
