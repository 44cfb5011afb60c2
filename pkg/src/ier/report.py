"""Run reports: JSON document, aligned text table and utilization-matrix CSV."""

from __future__ import annotations

import statistics
from pathlib import Path

from . import runstore
from .errors import ParseError
from .metrics import utilization_matrix

METRIC_KEYS = ("completeness", "executability", "consistency", "quality", "mean_duration_seconds",
               "review_efficiency", "test_efficiency", "overall_efficiency")


def build_report(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise ParseError("not a run directory (config.json missing)", path=str(run_dir))
    config = runstore.read_json(cfg_path)
    n = int(config["n_batches"])
    batches = []
    missing = []
    hits = []
    for i in range(1, n + 1):
        d = runstore.batch_dir(run_dir, i)
        if not (d / "metrics.json").exists():
            missing.append(i)
            continue
        summary = runstore.read_json(d / "metrics.json")
        summary.pop("durations", None)
        batches.append(summary)
        for entry in runstore.read_retrievals(d / "retrievals.jsonl"):
            hits.append((int(entry["batch"]), int(entry["origin_batch"])))
    overall = {}
    with_metrics = [b["metrics"] for b in batches if b["metrics"]]
    for key in METRIC_KEYS:
        overall[key] = statistics.fmean(m[key] for m in with_metrics) if with_metrics else None
    return {
        "pattern": config["pattern"],
        "n_batches": n,
        "seed": config["seed"],
        "epsilon": config["epsilon"],
        "theta": config["theta"],
        "complete": not missing,
        "missing_batches": missing,
        "batches": batches,
        "overall": overall,
        "utilization_matrix": utilization_matrix(hits, n),
    }


def _fmt(v, width: int = 8, digits: int = 4) -> str:
    if v is None:
        return "-".rjust(width)
    if isinstance(v, float):
        return f"{v:.{digits}f}".rjust(width)
    return str(v).rjust(width)


def text_table(report: dict) -> str:
    cols = ["batch", "tasks", "compl", "exec", "consist", "quality", "duration", "rev_eff", "test_eff",
            "all_eff", "hit_ratio", "active", "acquired", "retained"]
    lines = [
        f"pattern={report['pattern']} batches={report['n_batches']} seed={report['seed']} "
        f"epsilon={report['epsilon']} theta={report['theta']}",
        " ".join(c.rjust(9) for c in cols),
    ]
    for b in report["batches"]:
        m = b["metrics"] or {}
        elim = b.get("elimination") or {}
        row = [
            b["batch"], b["n_tasks"], m.get("completeness"), m.get("executability"), m.get("consistency"),
            m.get("quality"), m.get("mean_duration_seconds"), m.get("review_efficiency"),
            m.get("test_efficiency"), m.get("overall_efficiency"), b["hit_ratio"], b["active_pool_size"],
            b["acquired_pool_size"], elim.get("retained_fraction"),
        ]
        lines.append(" ".join(_fmt(v, 9) for v in row))
    for i in report["missing_batches"]:
        lines.append(f"{str(i).rjust(9)} {'(missing)'.rjust(9)}")
    for b in report["batches"]:
        elim = b.get("elimination")
        if elim and elim.get("original"):
            lines.append(
                f"batch {b['batch']}: retained {elim['retained']}/{elim['original']} = "
                f"{elim['retained_fraction']:.6f} ({100 * elim['retained_fraction']:.2f}%)"
            )
    lines.append("")
    lines.append("utilization (rows: consuming batch, cols: producing batch)")
    n = report["n_batches"]
    lines.append("     " + " ".join(str(j).rjust(7) for j in range(1, n + 1)))
    for i, row in enumerate(report["utilization_matrix"], start=1):
        lines.append(str(i).rjust(4) + " " + " ".join(f"{v:7.4f}" for v in row))
    return "\n".join(lines) + "\n"


def utilization_csv(report: dict) -> str:
    n = report["n_batches"]
    out = ["consumer," + ",".join(f"b{j}" for j in range(1, n + 1))]
    for i, row in enumerate(report["utilization_matrix"], start=1):
        out.append(f"b{i}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def write_report(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    report = build_report(run_dir)
    runstore.write_json(run_dir / "report.json", report)
    (run_dir / "report.txt").write_text(text_table(report), encoding="utf-8", newline="\n")
    (run_dir / "utilization.csv").write_text(utilization_csv(report), encoding="utf-8", newline="\n")
    return report
