"""Command-line entry point (``ier``).

Exit codes: 0 success, 2 input error, 3 resumable runtime failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from collections import Counter
from pathlib import Path

from . import runstore, synthetic
from .acquisition import acquire
from .backends.factory import build_agent, build_embedder, build_sandbox
from .chain import load_chains
from .config import PATTERNS, load_config
from .elimination import eliminate_pool
from .errors import ConfigurationError, InvalidArgument, ParseError, RunInterrupted, UndefinedMetric
from .pool import ExperiencePool, load_pool, save_pool
from .propagation import Runner, batch_manifest, load_corpus, partition_tasks
from .report import text_table, write_report

EXIT_OK, EXIT_INPUT, EXIT_RESUMABLE, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("ier")


def _overrides(args) -> dict:
    run: dict = {}
    for flag, key in (("pattern", "pattern"), ("batches", "n_batches"), ("seed", "seed"),
                      ("epsilon", "epsilon"), ("theta", "theta"), ("k", "k"), ("workers", "workers"),
                      ("corpus", "corpus")):
        value = getattr(args, flag, None)
        if value is not None:
            run[key] = value
    out: dict = {"run": run}
    backend: dict = {}
    if getattr(args, "backend", None):
        backend["mode"] = args.backend
    if getattr(args, "fixtures", None):
        backend["fixtures"] = args.fixtures
    if backend:
        out["backend"] = backend
    return out


def cmd_ingest(args) -> int:
    tasks = load_corpus(args.corpus)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        batches = partition_tasks(tasks, args.batches, args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    manifest = batch_manifest(batches)
    if args.out:
        runstore.write_json(Path(args.out), manifest)
    categories = sorted({t.category for t in tasks})
    print(f"{len(tasks)} tasks, {len(categories)} categories, {len(batches)} batches")
    for b in batches:
        per_cat = Counter(t.category for t in b.tasks)
        spread = sorted(set(per_cat.get(c, 0) for c in categories))
        print(f"batch {b.ordinal}: {len(b.tasks)} tasks, per-category counts {spread}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    if not cfg.corpus:
        raise ConfigurationError("no task corpus given (--corpus or run.corpus)")
    tasks = load_corpus(cfg.corpus)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        batches = partition_tasks(tasks, cfg.n_batches, cfg.seed)
    run_id = args.run_id or f"{cfg.pattern}-b{cfg.n_batches}-s{cfg.seed}"
    run_dir = Path(args.out) / run_id
    runner = Runner(cfg, build_agent(cfg), build_embedder(cfg), build_sandbox(cfg), run_dir, resume=args.resume)
    try:
        runner.run(batches)
    except RunInterrupted as exc:
        write_report(run_dir)
        print(f"run interrupted: {exc}\nresume with --resume (run directory {run_dir})", file=sys.stderr)
        return EXIT_RESUMABLE
    report = write_report(run_dir)
    print(text_table(report), end="")
    print(f"run directory: {run_dir}")
    return EXIT_OK


def cmd_acquire(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    chains = load_chains(args.chains)
    embedder = build_embedder(cfg)
    acq = acquire(chains, build_agent(cfg), embedder, build_sandbox(cfg), args.batch, args.first_ord, cfg.workers)
    pool = ExperiencePool(embedder.dim, embedder, acq.records)
    save_pool(pool, args.out)
    print(f"{len(chains)} chains, {len(acq.shortcuts)} shortcuts, {len(pool)} records -> {args.out}")
    if acq.failed_tasks:
        print(f"extraction failed for: {', '.join(acq.failed_tasks)}", file=sys.stderr)
    return EXIT_OK


def _read_freqs(path: str) -> dict[str, int]:
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    try:
        head = json.loads(first)
    except json.JSONDecodeError:
        head = None
    if isinstance(head, dict) and head.get("format") == "ier-pool":
        return load_pool(path).freq_snapshot()
    data = runstore.read_json(Path(path))
    if not isinstance(data, dict):
        raise ParseError("frequency snapshot must map record ids to counts", path=path)
    try:
        return {str(k): int(v) for k, v in data.items()}
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad frequency value: {exc}", path=path) from exc


def cmd_eliminate(args) -> int:
    pool = load_pool(args.pool)
    freqs = None
    if args.freq_snapshot:
        freqs = _read_freqs(args.freq_snapshot)
    else:
        print("warning: no frequency snapshot given; applying the gain filter only", file=sys.stderr)
    result = eliminate_pool(pool, args.epsilon, args.theta, freqs)
    out = ExperiencePool(pool.dim, None, (r.copy() for r in result.kept))
    save_pool(out, args.out)
    print(f"original: {result.original}")
    print(f"gain-filtered: {result.gain_kept} (epsilon={args.epsilon})")
    if freqs is not None:
        print(f"frequency-filtered: {result.freq_kept} (theta={args.theta})")
    print(f"retained: {result.retained}")
    print(f"retained fraction: {result.retained}/{result.original} = {result.retained_fraction:.6f} "
          f"({100 * result.retained_fraction:.2f}%)")
    return EXIT_OK


def cmd_report(args) -> int:
    report = write_report(args.run_dir)
    print(text_table(report), end="")
    if report["missing_batches"]:
        print(f"incomplete run: batches {report['missing_batches']} missing", file=sys.stderr)
    return EXIT_OK


def cmd_inspect(args) -> int:
    pool = load_pool(args.pool)
    print(f"records: {len(pool)} (S2I {pool.size('S2I')}, I2S {pool.size('I2S')}), dim {pool.dim}")
    for b, ids in sorted(pool.by_origin().items()):
        print(f"origin batch {b}: {len(ids)}")
    try:
        print(f"hit ratio: {pool.hit_ratio():.4f}, retrieval events: {pool.total_freq()}")
    except UndefinedMetric:
        print("hit ratio: undefined (empty pool)")
    top = sorted(pool.records(), key=lambda r: (-r.freq, r.created_ord))[: args.top]
    for r in top:
        key = r.key_text.replace("\n", " ")[:60]
        print(f"  {r.kind} freq={r.freq:<4d} gain={r.gain:+.3f} batch={r.origin_batch} {key}")
    return EXIT_OK


def cmd_synth(args) -> int:
    corpus, fixtures = synthetic.write(args.out, args.tasks, args.categories, args.seed,
                                       args.max_review, args.max_test)
    print(f"wrote {corpus} and {fixtures}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ier", description="Iterative experience refinement for software-building agents.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="partition a task corpus into stratified batches")
    s.add_argument("corpus")
    s.add_argument("--batches", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write the task_id -> batch manifest here")
    s.set_defaults(func=cmd_ingest)

    def run_flags(s):
        s.add_argument("--config")
        s.add_argument("--backend", choices=("remote", "scripted"))
        s.add_argument("--fixtures")
        s.add_argument("--workers", type=int)

    s = sub.add_parser("run", help="run a propagation pattern end to end")
    run_flags(s)
    s.add_argument("--corpus")
    s.add_argument("--pattern", choices=PATTERNS)
    s.add_argument("--batches", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--k", type=int)
    s.add_argument("--out", default="runs")
    s.add_argument("--run-id")
    s.add_argument("--resume", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("acquire", help="mine experiences from saved chains")
    run_flags(s)
    s.add_argument("chains")
    s.add_argument("--batch", type=int, default=1)
    s.add_argument("--first-ord", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_acquire)

    s = sub.add_parser("eliminate", help="filter a saved pool by gain and usage frequency")
    s.add_argument("pool")
    s.add_argument("--epsilon", type=float, default=0.95)
    s.add_argument("--theta", type=float, default=0.95)
    s.add_argument("--freq-snapshot", help="JSON {record_id: count} or a pool file whose counts to use")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eliminate)

    s = sub.add_parser("report", help="(re)build reports for a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("inspect", help="summarise a pool file")
    s.add_argument("pool")
    s.add_argument("--top", type=int, default=5)
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("synth", help="write a synthetic corpus with scripted fixtures")
    s.add_argument("out")
    s.add_argument("--tasks", type=int, default=24)
    s.add_argument("--categories", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-review", type=int, default=3)
    s.add_argument("--max-test", type=int, default=3)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ParseError, InvalidArgument, UndefinedMetric, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunInterrupted as exc:
        print(f"interrupted: {exc}", file=sys.stderr)
        return EXIT_RESUMABLE


if __name__ == "__main__":
    sys.exit(main())
